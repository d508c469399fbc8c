#include "hpaf/cps.hpp"

#include <algorithm>
#include <cmath>

#include "hpaf/errors.hpp"
#include "hpaf/signal_prep.hpp"

namespace hpaf {
namespace {

// Argmax of |x| within [i-w, i+w], hill-climbed to a fixpoint so the result
// is a local maximum of |x| within its own +-w neighborhood.
int64_t refine_peak(const std::vector<double>& x, int64_t i, int64_t w) {
  int64_t n = int64_t(x.size());
  for (int iter = 0; iter < 32; ++iter) {
    int64_t lo = std::max<int64_t>(0, i - w);
    int64_t hi = std::min<int64_t>(n - 1, i + w);
    int64_t best = i;
    for (int64_t j = lo; j <= hi; ++j)
      if (std::abs(x[size_t(j)]) > std::abs(x[size_t(best)])) best = j;
    if (best == i) break;
    i = best;
  }
  return i;
}

}  // namespace

std::vector<int64_t> detect_rpeaks(const std::vector<double>& signal, double fs) {
  int64_t n = int64_t(signal.size());
  if (double(n) < fs)
    throw SignalTooShort("R-peak detection needs at least 1 s of signal, got " +
                         std::to_string(double(n) / fs) + " s");

  // Five-point derivative, centered to avoid group-delay bookkeeping.
  std::vector<double> sq(size_t(n), 0.0);
  for (int64_t i = 2; i < n - 2; ++i) {
    double d = (2.0 * signal[size_t(i + 2)] + signal[size_t(i + 1)] -
                signal[size_t(i - 1)] - 2.0 * signal[size_t(i - 2)]) /
               8.0;
    sq[size_t(i)] = d * d;
  }

  // 150 ms centered moving-window integration via prefix sums.
  int64_t win = std::max<int64_t>(1, int64_t(std::llround(0.15 * fs)));
  int64_t half = win / 2;
  std::vector<double> prefix(size_t(n) + 1, 0.0);
  for (int64_t i = 0; i < n; ++i) prefix[size_t(i + 1)] = prefix[size_t(i)] + sq[size_t(i)];
  std::vector<double> integ(size_t(n), 0.0);
  for (int64_t i = 0; i < n; ++i) {
    int64_t lo = std::max<int64_t>(0, i - half);
    int64_t hi = std::min<int64_t>(n, i - half + win);
    integ[size_t(i)] = (prefix[size_t(hi)] - prefix[size_t(lo)]) / double(win);
  }

  // Adaptive threshold scan with refractory.
  int64_t refractory = int64_t(std::llround(0.2 * fs));
  double spk = 0.0;
  int64_t init_end = std::min<int64_t>(n, int64_t(std::llround(2.0 * fs)));
  for (int64_t i = 0; i < init_end; ++i) spk = std::max(spk, integ[size_t(i)]);
  double thr = 0.5 * spk;

  std::vector<int64_t> raw;
  int64_t last = -refractory;
  for (int64_t i = 1; i + 1 < n; ++i) {
    double v = integ[size_t(i)];
    if (v > thr && v >= integ[size_t(i - 1)] && v >= integ[size_t(i + 1)]) {
      if (i - last >= refractory) {
        raw.push_back(i);
        last = i;
        spk = 0.875 * spk + 0.125 * v;
        thr = 0.5 * spk;
      }
    }
  }

  // Refine each candidate onto the band-passed waveform.
  int64_t w = std::max<int64_t>(1, int64_t(std::llround(0.05 * fs)));
  std::vector<int64_t> refined;
  refined.reserve(raw.size());
  for (int64_t i : raw) refined.push_back(refine_peak(signal, i, w));
  std::sort(refined.begin(), refined.end());
  refined.erase(std::unique(refined.begin(), refined.end()), refined.end());

  // Enforce the refractory after refinement, keeping the stronger peak.
  std::vector<int64_t> peaks;
  for (int64_t i : refined) {
    if (!peaks.empty() && i - peaks.back() < refractory) {
      if (std::abs(signal[size_t(i)]) > std::abs(signal[size_t(peaks.back())]))
        peaks.back() = i;
    } else {
      peaks.push_back(i);
    }
  }
  return peaks;
}

std::optional<PhaseSegments> segment_phases(const std::vector<double>& signal,
                                            int64_t r_index, const PhaseWindows& windows,
                                            bool normalize) {
  int64_t n = int64_t(signal.size());
  if (r_index + windows.p_start < 0 || r_index + windows.tu_end > n)
    return std::nullopt;
  auto slice = [&](int from, int to) {
    return std::vector<double>(signal.begin() + long(r_index + from),
                               signal.begin() + long(r_index + to));
  };
  PhaseSegments seg;
  seg.r_index = r_index;
  seg.p = slice(windows.p_start, windows.qrs_start);
  seg.qrs = slice(windows.qrs_start, windows.st_start);
  seg.st = slice(windows.st_start, windows.tu_start);
  seg.tu = slice(windows.tu_start, windows.tu_end);
  if (normalize) {
    seg.p = zscore(seg.p);
    seg.qrs = zscore(seg.qrs);
    seg.st = zscore(seg.st);
    seg.tu = zscore(seg.tu);
  }
  return seg;
}

BeatExtraction extract_beats(const EcgRecord& record, const PhaseWindows& windows,
                             bool normalize) {
  BeatExtraction out;
  auto peaks = detect_rpeaks(record.samples, record.sampling_rate);
  for (int64_t r : peaks) {
    auto seg = segment_phases(record.samples, r, windows, normalize);
    if (!seg) {
      ++out.skipped;
      continue;
    }
    seg->subject_id = record.subject_id;
    seg->session_id = record.session_id;
    out.beats.push_back(std::move(*seg));
  }
  return out;
}

}  // namespace hpaf
