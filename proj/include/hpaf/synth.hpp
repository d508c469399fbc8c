#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hpaf/record.hpp"

namespace hpaf::synth {

struct Wave {
  double center_s = 0.0;  // offset from the R peak, seconds
  double width_s = 0.01;  // Gaussian sigma, seconds
  double amp_mv = 0.0;
};

/// Per-subject beat shape: five Gaussian bumps (P, Q, R, S, T), a resting
/// heart rate, and session noise levels. R amplitude dominates every other
/// wave by construction so the detector ground truth stays valid.
struct SubjectMorphology {
  std::array<Wave, 5> waves;  // P, Q, R, S, T
  double heart_rate_bpm = 60.0;
  double rr_jitter_s = 0.0;   // RMS jitter of RR intervals
  double noise_mv = 0.0;      // white noise RMS
  double baseline_mv = 0.0;   // slow baseline sine amplitude
  double baseline_hz = 0.2;
};

struct SynthConfig {
  double sample_rate_hz = 200.0;
  double noise_mv = 0.02;
  double baseline_mv = 0.1;
  double rr_jitter_s = 0.02;
  /// Minimum normalized parameter distance between issued subjects.
  double distance_floor = 0.35;
};

/// Issues subject morphologies with rejection sampling against everything
/// already issued, so any two subjects differ by at least the distance
/// floor. The same seed always returns the same morphology.
class SubjectGenerator {
 public:
  explicit SubjectGenerator(SynthConfig cfg) : cfg_(cfg) {}

  SubjectMorphology generate_subject(uint64_t subject_seed);

  /// Normalized parameter distance used by the rejection rule.
  static double parameter_distance(const SubjectMorphology& a,
                                   const SubjectMorphology& b);

 private:
  SynthConfig cfg_;
  std::vector<std::pair<uint64_t, SubjectMorphology>> issued_;
};

struct RenderedRecord {
  EcgRecord record;
  std::vector<int64_t> r_indices;  // planted ground truth
};

/// Gaussian-bump beats at jittered RR intervals plus white noise and a slow
/// baseline sine. Duration in seconds (>= 2 s).
RenderedRecord render_record(const SubjectMorphology& morphology, double duration_s,
                             uint64_t session_seed, const SynthConfig& cfg);

struct SynthDataset {
  std::vector<RenderedRecord> records;  // subject-major, session order kept
};

/// Deterministic multi-subject dataset: subject ids "s00".."sNN", session
/// ids "1".."M".
SynthDataset make_dataset(int subjects, int sessions, double duration_s,
                          uint64_t seed, const SynthConfig& cfg);

}  // namespace hpaf::synth
