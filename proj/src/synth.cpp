#include "hpaf/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "hpaf/errors.hpp"
#include "hpaf/rng.hpp"

namespace hpaf::synth {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Range {
  double lo, hi;
  double draw(Rng& rng) const { return rng.uniform(lo, hi); }
  double norm(double v) const { return (v - lo) / (hi - lo); }
};

// Wave parameter ranges, seconds / mV. Centers keep P < Q < R < S < T and sit
// inside the phase windows they are meant to shape.
struct WaveRanges {
  Range center, width, amp;
};

constexpr WaveRanges kP{{-0.30, -0.18}, {0.020, 0.045}, {0.05, 0.30}};
constexpr WaveRanges kQ{{-0.045, -0.025}, {0.006, 0.014}, {-0.25, -0.04}};
constexpr WaveRanges kR{{0.0, 0.0}, {0.007, 0.013}, {0.8, 1.6}};
constexpr WaveRanges kS{{0.025, 0.050}, {0.006, 0.014}, {-0.35, -0.06}};
constexpr WaveRanges kT{{0.24, 0.40}, {0.035, 0.080}, {0.10, 0.45}};
constexpr Range kHeartRate{55.0, 90.0};

constexpr std::array<WaveRanges, 5> kWaveRanges = {kP, kQ, kR, kS, kT};

SubjectMorphology raw_draw(Rng& rng, const SynthConfig& cfg) {
  SubjectMorphology m;
  for (size_t w = 0; w < 5; ++w) {
    m.waves[w].center_s = kWaveRanges[w].center.draw(rng);
    m.waves[w].width_s = kWaveRanges[w].width.draw(rng);
    m.waves[w].amp_mv = kWaveRanges[w].amp.draw(rng);
  }
  // R must dominate: cap every other wave at R/3.2.
  double cap = std::abs(m.waves[2].amp_mv) / 3.2;
  for (size_t w : {size_t(0), size_t(1), size_t(3), size_t(4)}) {
    double a = m.waves[w].amp_mv;
    if (std::abs(a) > cap) m.waves[w].amp_mv = a < 0 ? -cap : cap;
  }
  m.heart_rate_bpm = kHeartRate.draw(rng);
  m.rr_jitter_s = cfg.rr_jitter_s;
  m.noise_mv = cfg.noise_mv;
  m.baseline_mv = cfg.baseline_mv;
  return m;
}

}  // namespace

double SubjectGenerator::parameter_distance(const SubjectMorphology& a,
                                            const SubjectMorphology& b) {
  double s = 0.0;
  auto add = [&](const Range& r, double va, double vb) {
    if (r.hi == r.lo) return;
    double d = r.norm(va) - r.norm(vb);
    s += d * d;
  };
  for (size_t w = 0; w < 5; ++w) {
    add(kWaveRanges[w].center, a.waves[w].center_s, b.waves[w].center_s);
    add(kWaveRanges[w].width, a.waves[w].width_s, b.waves[w].width_s);
    add(kWaveRanges[w].amp, a.waves[w].amp_mv, b.waves[w].amp_mv);
  }
  add(kHeartRate, a.heart_rate_bpm, b.heart_rate_bpm);
  return std::sqrt(s);
}

SubjectMorphology SubjectGenerator::generate_subject(uint64_t subject_seed) {
  for (const auto& [seed, m] : issued_)
    if (seed == subject_seed) return m;
  Rng rng(derive_seed(subject_seed, "subject-morphology"));
  SubjectMorphology m = raw_draw(rng, cfg_);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    bool ok = true;
    for (const auto& [seed, other] : issued_)
      if (parameter_distance(m, other) < cfg_.distance_floor) {
        ok = false;
        break;
      }
    if (ok) break;
    m = raw_draw(rng, cfg_);
  }
  issued_.emplace_back(subject_seed, m);
  return m;
}

RenderedRecord render_record(const SubjectMorphology& morphology, double duration_s,
                             uint64_t session_seed, const SynthConfig& cfg) {
  if (duration_s < 2.0) throw ConfigError("synthetic records need >= 2 s duration");
  double fs = cfg.sample_rate_hz;
  int64_t n = int64_t(std::llround(duration_s * fs));
  RenderedRecord out;
  out.record.sampling_rate = fs;
  out.record.lead_label = "synthI";
  out.record.samples.assign(size_t(n), 0.0);

  Rng rng(derive_seed(session_seed, "session"));
  double rr_mean = 60.0 / morphology.heart_rate_bpm;
  int64_t right_context = int64_t(std::llround(0.8 * fs));

  // Plant beats; every beat except possibly the final one keeps the full
  // right context inside the record.
  double t = 0.5;
  bool closed = false;
  while (!closed) {
    int64_t idx = int64_t(std::llround(t * fs));
    if (idx >= n) break;
    if (idx + right_context > n) closed = true;  // final beat
    out.r_indices.push_back(idx);
    double rr = rr_mean;
    if (morphology.rr_jitter_s > 0.0)
      rr = std::max(0.4 * rr_mean, rr_mean + morphology.rr_jitter_s * rng.normal());
    t += rr;
  }

  auto& samples = out.record.samples;
  for (int64_t r : out.r_indices) {
    double r_time = double(r) / fs;
    for (const Wave& w : morphology.waves) {
      if (w.amp_mv == 0.0) continue;
      double c = r_time + w.center_s;
      int64_t lo = std::max<int64_t>(0, int64_t(std::floor((c - 5.0 * w.width_s) * fs)));
      int64_t hi = std::min<int64_t>(n - 1, int64_t(std::ceil((c + 5.0 * w.width_s) * fs)));
      for (int64_t i = lo; i <= hi; ++i) {
        double dt = double(i) / fs - c;
        samples[size_t(i)] += w.amp_mv * std::exp(-dt * dt / (2.0 * w.width_s * w.width_s));
      }
    }
  }

  if (morphology.baseline_mv != 0.0) {
    double phase = rng.uniform(0.0, kTwoPi);
    for (int64_t i = 0; i < n; ++i)
      samples[size_t(i)] +=
          morphology.baseline_mv *
          std::sin(kTwoPi * morphology.baseline_hz * double(i) / fs + phase);
  }
  if (morphology.noise_mv > 0.0)
    for (int64_t i = 0; i < n; ++i)
      samples[size_t(i)] += morphology.noise_mv * rng.normal();

  return out;
}

SynthDataset make_dataset(int subjects, int sessions, double duration_s, uint64_t seed,
                          const SynthConfig& cfg) {
  SynthDataset ds;
  SubjectGenerator gen(cfg);
  for (int s = 0; s < subjects; ++s) {
    SubjectMorphology m = gen.generate_subject(derive_seed(seed, "subject", uint64_t(s)));
    char sid[16];
    std::snprintf(sid, sizeof(sid), "s%02d", s);
    for (int sess = 0; sess < sessions; ++sess) {
      uint64_t session_seed =
          derive_seed(seed, "render", uint64_t(s) * 1000 + uint64_t(sess));
      RenderedRecord rec = render_record(m, duration_s, session_seed, cfg);
      rec.record.subject_id = sid;
      rec.record.session_id = std::to_string(sess + 1);
      ds.records.push_back(std::move(rec));
    }
  }
  return ds;
}

}  // namespace hpaf::synth
