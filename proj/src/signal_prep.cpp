#include "hpaf/signal_prep.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "hpaf/errors.hpp"

namespace hpaf {
namespace {

using cplx = std::complex<double>;
constexpr double kPi = std::numbers::pi;

// Steady-state filter state for a unit-step input (per section). Scaling this
// by the first sample kills the startup transient for locally constant
// signals, which keeps the 3*order reflect pad sufficient.
struct BiquadState {
  double z0 = 0.0, z1 = 0.0;
};

BiquadState step_state(const Biquad& s) {
  double denom = 1.0 + s.a1 + s.a2;
  BiquadState st;
  if (std::abs(denom) < 1e-300) return st;
  st.z0 = (s.b1 + s.b2 - (s.a1 + s.a2) * s.b0) / denom;
  st.z1 = s.b2 - s.a2 * (s.b0 + st.z0);
  return st;
}

double section_dc_gain(const Biquad& s) {
  return (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
}

void run_sos(const std::vector<Biquad>& sos, std::vector<double>& x, double x0) {
  // Direct form II transposed, initial state matched to a step of height x0.
  std::vector<BiquadState> st(sos.size());
  double scale = x0;
  for (size_t i = 0; i < sos.size(); ++i) {
    BiquadState s = step_state(sos[i]);
    st[i].z0 = s.z0 * scale;
    st[i].z1 = s.z1 * scale;
    scale *= section_dc_gain(sos[i]);
  }
  for (double& v : x) {
    double in = v;
    for (size_t i = 0; i < sos.size(); ++i) {
      const Biquad& c = sos[i];
      double out = c.b0 * in + st[i].z0;
      st[i].z0 = c.b1 * in - c.a1 * out + st[i].z1;
      st[i].z1 = c.b2 * in - c.a2 * out;
      in = out;
    }
    v = in;
  }
}

double kaiser_i0(double x) {
  // Series expansion of the zeroth-order modified Bessel function.
  double sum = 1.0, term = 1.0;
  double half = x / 2.0;
  for (int k = 1; k < 64; ++k) {
    term *= (half / k) * (half / k);
    sum += term;
    if (term < 1e-18 * sum) break;
  }
  return sum;
}

int64_t igcd(int64_t a, int64_t b) { return b == 0 ? a : igcd(b, a % b); }

// fs values may be non-integer; scale to a common rational grid first.
void rational_ratio(double fs_in, double fs_out, int64_t& up, int64_t& down) {
  // Try exact small-denominator representation via the continued fraction of
  // fs_out/fs_in; desk-scale rates (200, 360, 500, 1000, 128.2) all resolve.
  double target = fs_out / fs_in;
  int64_t best_num = 1, best_den = 1;
  double best_err = std::abs(target - 1.0);
  int64_t num0 = 0, den0 = 1, num1 = 1, den1 = 0;
  double x = target;
  for (int iter = 0; iter < 48; ++iter) {
    int64_t a = int64_t(std::floor(x));
    int64_t num2 = a * num1 + num0;
    int64_t den2 = a * den1 + den0;
    if (den2 > 1'000'000 || num2 > 1'000'000) break;
    double err = std::abs(double(num2) / double(den2) - target);
    if (err < best_err) {
      best_err = err;
      best_num = num2;
      best_den = den2;
    }
    if (err < 1e-12 * target) break;
    double frac = x - double(a);
    if (frac < 1e-15) break;
    x = 1.0 / frac;
    num0 = num1;
    den0 = den1;
    num1 = num2;
    den1 = den2;
  }
  int64_t g = igcd(best_num, best_den);
  up = best_num / g;
  down = best_den / g;
}

}  // namespace

std::vector<Biquad> design_bandpass(double low_cut_hz, double high_cut_hz, double fs,
                                    int order) {
  if (order < 1) throw ConfigError("filter order must be >= 1");
  if (!(0.0 < low_cut_hz && low_cut_hz < high_cut_hz && high_cut_hz < fs / 2.0))
    throw ConfigError("band edges must satisfy 0 < low < high < fs/2");

  // Pre-warped analog edges for the bilinear transform.
  double wl = 2.0 * fs * std::tan(kPi * low_cut_hz / fs);
  double wh = 2.0 * fs * std::tan(kPi * high_cut_hz / fs);
  double w0 = std::sqrt(wl * wh);
  double bw = wh - wl;

  // Low-pass Butterworth prototype poles on the unit circle, left half-plane.
  std::vector<cplx> proto;
  for (int k = 1; k <= order; ++k) {
    double theta = kPi * (2.0 * k + order - 1.0) / (2.0 * order);
    proto.emplace_back(std::cos(theta), std::sin(theta));
  }

  // Low-pass -> band-pass: each prototype pole p maps to the two roots of
  // s^2 - (bw*p) s + w0^2 = 0.
  std::vector<cplx> apoles;
  for (const cplx& p : proto) {
    cplx bp = bw * p;
    cplx disc = std::sqrt(bp * bp - 4.0 * w0 * w0);
    apoles.push_back((bp + disc) / 2.0);
    apoles.push_back((bp - disc) / 2.0);
  }

  // Bilinear transform of the poles; zeros land at z=+1 (order) and z=-1
  // (order), one pair per section.
  std::vector<cplx> zpoles;
  for (const cplx& s : apoles) zpoles.push_back((2.0 * fs + s) / (2.0 * fs - s));

  // Group into conjugate pairs.
  std::vector<cplx> upper;
  for (const cplx& p : zpoles)
    if (p.imag() > 0.0) upper.push_back(p);
  std::sort(upper.begin(), upper.end(),
            [](const cplx& a, const cplx& b) { return std::abs(a) < std::abs(b); });
  if (int(upper.size()) != order)
    throw ConfigError("band-pass pole pairing failed; edges too extreme");

  std::vector<Biquad> sos;
  for (const cplx& p : upper) {
    Biquad s;
    s.b0 = 1.0;
    s.b1 = 0.0;
    s.b2 = -1.0;  // zeros at +1 and -1
    s.a1 = -2.0 * p.real();
    s.a2 = std::norm(p);
    sos.push_back(s);
  }

  // Normalize to unit gain at the (warped) center frequency, spreading the
  // correction evenly across sections for conditioning.
  double fc = std::atan(w0 / (2.0 * fs)) * fs / kPi;
  double g = sos_gain_at(sos, fc, fs);
  double per_section = std::pow(1.0 / g, 1.0 / double(order));
  for (Biquad& s : sos) {
    s.b0 *= per_section;
    s.b1 *= per_section;
    s.b2 *= per_section;
  }
  return sos;
}

double sos_gain_at(const std::vector<Biquad>& sos, double hz, double fs) {
  cplx z = std::exp(cplx(0.0, -2.0 * kPi * hz / fs));
  cplx h(1.0, 0.0);
  for (const Biquad& s : sos) {
    cplx num = s.b0 + s.b1 * z + s.b2 * z * z;
    cplx den = 1.0 + s.a1 * z + s.a2 * z * z;
    h *= num / den;
  }
  return std::abs(h);
}

std::vector<double> bandpass(const std::vector<double>& signal, double fs,
                             const PrepConfig& cfg) {
  if (fs <= 2.0 * cfg.high_cut_hz)
    throw ConfigError("sampling rate " + std::to_string(fs) +
                      " Hz too low for high cut " + std::to_string(cfg.high_cut_hz) +
                      " Hz");
  size_t pad = size_t(3 * cfg.filter_order);
  if (signal.size() <= 3 * size_t(cfg.filter_order))
    throw SignalTooShort("signal length " + std::to_string(signal.size()) +
                         " too short for order-" + std::to_string(cfg.filter_order) +
                         " band-pass");
  auto sos = design_bandpass(cfg.low_cut_hz, cfg.high_cut_hz, fs, cfg.filter_order);

  // Odd reflection keeps the padded signal continuous in value and slope.
  size_t n = signal.size();
  pad = std::min(pad, n - 1);
  std::vector<double> x;
  x.reserve(n + 2 * pad);
  for (size_t i = pad; i >= 1; --i) x.push_back(2.0 * signal[0] - signal[i]);
  x.insert(x.end(), signal.begin(), signal.end());
  for (size_t i = 1; i <= pad; ++i)
    x.push_back(2.0 * signal[n - 1] - signal[n - 1 - i]);

  run_sos(sos, x, x.front());
  std::reverse(x.begin(), x.end());
  run_sos(sos, x, x.front());
  std::reverse(x.begin(), x.end());

  return std::vector<double>(x.begin() + long(pad), x.begin() + long(pad + n));
}

std::vector<double> resample(const std::vector<double>& signal, double fs_in,
                             double fs_out) {
  if (fs_in <= 0.0 || fs_out <= 0.0)
    throw ConfigError("sampling rates must be positive");
  if (fs_in == fs_out) return signal;
  if (signal.empty()) return {};

  int64_t up = 1, down = 1;
  rational_ratio(fs_in, fs_out, up, down);

  int64_t n_in = int64_t(signal.size());
  int64_t n_out = int64_t(std::llround(double(n_in) * fs_out / fs_in));

  // Kaiser-windowed sinc low-pass at the upsampled rate fs_in*up.
  const double beta = 8.0;
  int64_t half = 10 * std::max(up, down);
  double cutoff = kPi / double(std::max(up, down));
  double i0b = kaiser_i0(beta);
  std::vector<double> h(size_t(2 * half + 1), 0.0);
  for (int64_t m = -half; m <= half; ++m) {
    double lp = m == 0 ? cutoff / kPi : std::sin(cutoff * double(m)) / (kPi * double(m));
    double frac = double(m) / double(half);
    double win = kaiser_i0(beta * std::sqrt(std::max(0.0, 1.0 - frac * frac))) / i0b;
    h[size_t(m + half)] = lp * win * double(up);
  }

  // y[n] = sum_i h[n*down + half - up*i] * x[i], zero beyond the edges.
  std::vector<double> out(size_t(n_out), 0.0);
  for (int64_t n = 0; n < n_out; ++n) {
    int64_t base = n * down + half;
    // up*i in [base - 2*half, base]
    int64_t i_lo = (base - 2 * half + up - 1) / up;  // ceil
    int64_t i_hi = base / up;                        // floor
    i_lo = std::max<int64_t>(i_lo, 0);
    i_hi = std::min<int64_t>(i_hi, n_in - 1);
    double acc = 0.0;
    for (int64_t i = i_lo; i <= i_hi; ++i) acc += h[size_t(base - up * i)] * signal[size_t(i)];
    out[size_t(n)] = acc;
  }
  return out;
}

std::vector<double> zscore(const std::vector<double>& segment) {
  if (segment.empty()) return {};
  double mean = 0.0;
  for (double v : segment) mean += v;
  mean /= double(segment.size());
  double var = 0.0;
  for (double v : segment) var += (v - mean) * (v - mean);
  var /= double(segment.size());
  double sd = std::sqrt(var);
  std::vector<double> out(segment.size(), 0.0);
  if (sd <= 1e-8) return out;
  for (size_t i = 0; i < segment.size(); ++i) out[i] = (segment[i] - mean) / sd;
  return out;
}

}  // namespace hpaf
