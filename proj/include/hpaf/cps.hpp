#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hpaf/record.hpp"

namespace hpaf {

/// Half-open sample windows relative to the R index. Defaults give the
/// canonical 60/40/60/80 phase lengths at 200 Hz.
struct PhaseWindows {
  int p_start = -80;
  int qrs_start = -20;  // == p end
  int st_start = 20;    // == qrs end
  int tu_start = 80;    // == st end
  int tu_end = 160;

  int left_context() const { return -p_start; }
  int right_context() const { return tu_end; }
  int p_len() const { return qrs_start - p_start; }
  int qrs_len() const { return st_start - qrs_start; }
  int st_len() const { return tu_start - st_start; }
  int tu_len() const { return tu_end - tu_start; }
};

/// One heartbeat as four phase-aligned segments.
struct PhaseSegments {
  int64_t r_index = 0;
  std::vector<double> p, qrs, st, tu;
  std::string subject_id;
  std::string session_id;
};

/// Detects R peaks on a preprocessed (band-passed, resampled) signal.
/// Derivative -> squaring -> 150 ms integration -> adaptive threshold with a
/// 200 ms refractory -> local-maximum refinement on |signal| within +-50 ms.
/// Returns strictly increasing indices. Throws SignalTooShort below 1 s.
std::vector<int64_t> detect_rpeaks(const std::vector<double>& signal, double fs);

/// Slices the four phase windows around r_index. Returns nullopt when the
/// windows fall outside the signal (beat skipped, never truncated).
/// When normalize is set each segment is z-scored independently.
std::optional<PhaseSegments> segment_phases(const std::vector<double>& signal,
                                            int64_t r_index, const PhaseWindows& windows,
                                            bool normalize = true);

struct BeatExtraction {
  std::vector<PhaseSegments> beats;
  int skipped = 0;  // boundary beats dropped
};

/// Runs detection and segmentation over a preprocessed record.
BeatExtraction extract_beats(const EcgRecord& record, const PhaseWindows& windows,
                             bool normalize = true);

}  // namespace hpaf
