#include <cmath>
#include <numbers>

#include "doctest.h"
#include "hpaf/errors.hpp"
#include "hpaf/signal_prep.hpp"
#include "support.hpp"

using namespace hpaf;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> sine(double hz, double fs, double seconds, double amp = 1.0) {
  int n = int(std::llround(fs * seconds));
  std::vector<double> out(size_t(n), 0.0);
  for (int i = 0; i < n; ++i) out[size_t(i)] = amp * std::sin(2.0 * kPi * hz * i / fs);
  return out;
}

// Amplitude of the `hz` component over the middle of the signal (projection
// onto the quadrature pair).
double tone_amplitude(const std::vector<double>& x, double hz, double fs) {
  size_t trim = size_t(fs);  // 1 s off each end
  double s = 0.0, c = 0.0;
  size_t n = 0;
  for (size_t i = trim; i + trim < x.size(); ++i) {
    s += x[i] * std::sin(2.0 * kPi * hz * double(i) / fs);
    c += x[i] * std::cos(2.0 * kPi * hz * double(i) / fs);
    ++n;
  }
  return 2.0 * std::hypot(s, c) / double(n);
}

}  // namespace

TEST_SUITE_BEGIN("signal_prep");

TEST_CASE("bandpass: DC is removed") {
  PrepConfig cfg;
  std::vector<double> x(2000, 5.0);  // 10 s at 200 Hz
  auto y = bandpass(x, 200.0, cfg);
  REQUIRE(y.size() == x.size());
  double worst = 0.0;
  for (size_t i = 200; i + 200 < y.size(); ++i) worst = std::max(worst, std::abs(y[i]));
  CHECK(worst < 1e-3);
}

TEST_CASE("bandpass: 10 Hz passband gain within 1 dB of unity") {
  PrepConfig cfg;
  double fs = 200.0;
  auto y = bandpass(sine(10.0, fs, 10.0), fs, cfg);
  double measured = tone_amplitude(y, 10.0, fs);
  double measured_db = 20.0 * std::log10(measured);
  CHECK(std::abs(measured_db) < 1.0);

  // frequency-response oracle: forward-backward application squares |H|
  auto sos = design_bandpass(cfg.low_cut_hz, cfg.high_cut_hz, fs, cfg.filter_order);
  double h = sos_gain_at(sos, 10.0, fs);
  double oracle_db = 20.0 * std::log10(h * h);
  CHECK(std::abs(oracle_db) < 1.0);
  CHECK(measured_db == doctest::Approx(oracle_db).epsilon(0.02));
}

TEST_CASE("bandpass: 60 Hz attenuated by at least 20 dB") {
  PrepConfig cfg;
  double fs = 200.0;
  auto y = bandpass(sine(60.0, fs, 10.0), fs, cfg);
  double measured = tone_amplitude(y, 60.0, fs);
  CHECK(20.0 * std::log10(1.0 / std::max(measured, 1e-12)) >= 20.0);

  auto sos = design_bandpass(cfg.low_cut_hz, cfg.high_cut_hz, fs, cfg.filter_order);
  double h = sos_gain_at(sos, 60.0, fs);
  CHECK(20.0 * std::log10(1.0 / (h * h)) >= 20.0);
}

TEST_CASE("bandpass: linearity") {
  PrepConfig cfg;
  testsup::Rng rng(801);
  std::vector<double> x(1000), y(1000);
  for (auto& v : x) v = rng.uniform(-1.0, 1.0);
  for (auto& v : y) v = rng.uniform(-1.0, 1.0);
  double a = 0.7, b = -1.3;
  std::vector<double> mix(1000);
  for (size_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + b * y[i];
  auto fx = bandpass(x, 200.0, cfg);
  auto fy = bandpass(y, 200.0, cfg);
  auto fmix = bandpass(mix, 200.0, cfg);
  double worst = 0.0;
  for (size_t i = 0; i < mix.size(); ++i)
    worst = std::max(worst, std::abs(fmix[i] - (a * fx[i] + b * fy[i])));
  CHECK(worst < 1e-9);
}

TEST_CASE("bandpass: preconditions") {
  PrepConfig cfg;
  std::vector<double> x(100, 0.0);
  CHECK_THROWS_AS(bandpass(x, 70.0, cfg), ConfigError);  // fs <= 2*high_cut
  std::vector<double> tiny(12, 0.0);
  CHECK_THROWS_AS(bandpass(tiny, 200.0, cfg), SignalTooShort);
}

TEST_CASE("resample: identity at equal rates") {
  testsup::Rng rng(802);
  std::vector<double> x(500);
  for (auto& v : x) v = rng.uniform(-1.0, 1.0);
  CHECK(resample(x, 200.0, 200.0) == x);
}

TEST_CASE("resample: constant stays constant at the scaled length") {
  std::vector<double> x(1000, 3.3);
  auto y = resample(x, 500.0, 200.0);
  CHECK(y.size() == 400);
  for (size_t i = 40; i + 40 < y.size(); ++i)
    CHECK(y[i] == doctest::Approx(3.3).epsilon(5e-3));
}

TEST_CASE("resample: 5 Hz sine 500 -> 200 Hz matches the analytic sine") {
  auto x = sine(5.0, 500.0, 4.0);
  auto y = resample(x, 500.0, 200.0);
  REQUIRE(y.size() == 800);
  double err2 = 0.0;
  size_t n = 0;
  for (size_t i = 40; i + 40 < y.size(); ++i) {
    double expected = std::sin(2.0 * kPi * 5.0 * double(i) / 200.0);
    err2 += (y[i] - expected) * (y[i] - expected);
    ++n;
  }
  CHECK(std::sqrt(err2 / double(n)) < 1e-2);
}

TEST_CASE("resample: upsampling 100 -> 360 Hz matches the analytic sine") {
  auto x = sine(3.0, 100.0, 4.0);
  auto y = resample(x, 100.0, 360.0);
  REQUIRE(y.size() == 1440);
  double err2 = 0.0;
  size_t n = 0;
  for (size_t i = 72; i + 72 < y.size(); ++i) {
    double expected = std::sin(2.0 * kPi * 3.0 * double(i) / 360.0);
    err2 += (y[i] - expected) * (y[i] - expected);
    ++n;
  }
  CHECK(std::sqrt(err2 / double(n)) < 1e-2);
}

TEST_CASE("resample: output length is round(len * ratio)") {
  std::vector<double> x(999, 1.0);
  CHECK(resample(x, 360.0, 200.0).size() == size_t(std::llround(999 * 200.0 / 360.0)));
  CHECK(resample(x, 1000.0, 200.0).size() == size_t(std::llround(999 * 0.2)));
}

TEST_CASE("zscore: examples and properties") {
  auto z = zscore({1.0, 2.0, 3.0});
  double mean = (z[0] + z[1] + z[2]) / 3.0;
  double var = (z[0] * z[0] + z[1] * z[1] + z[2] * z[2]) / 3.0 - mean * mean;
  CHECK(std::abs(mean) < 1e-10);
  CHECK(std::sqrt(var) == doctest::Approx(1.0).epsilon(1e-9));

  auto flat = zscore(std::vector<double>(17, 4.2));
  for (double v : flat) CHECK(v == 0.0);

  testsup::Rng rng(803);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> seg(size_t(rng.uniform_int(2, 200)));
    for (auto& v : seg) v = rng.uniform(-5.0, 5.0);
    auto z1 = zscore(seg);
    auto z2 = zscore(z1);
    double m = 0.0;
    for (double v : z1) m += v;
    m /= double(z1.size());
    CHECK(std::abs(m) < 1e-10);
    double sd = 0.0;
    for (double v : z1) sd += (v - m) * (v - m);
    sd = std::sqrt(sd / double(z1.size()));
    CHECK((sd == 0.0 || std::abs(sd - 1.0) < 1e-9));
    for (size_t i = 0; i < z1.size(); ++i) CHECK(std::abs(z1[i] - z2[i]) < 1e-12);
  }
}

TEST_SUITE_END();
