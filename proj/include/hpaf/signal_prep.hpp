#pragma once

#include <vector>

namespace hpaf {

struct PrepConfig {
  double low_cut_hz = 0.5;
  double high_cut_hz = 40.0;
  double target_rate_hz = 200.0;
  int filter_order = 4;  // analog prototype order of the band-pass
};

/// One second-order section, direct form II transposed.
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;  // numerator
  double a1 = 0.0, a2 = 0.0;            // denominator (a0 = 1)
};

/// Butterworth band-pass as a cascade of second-order sections. An order-N
/// prototype yields N sections (2N poles).
std::vector<Biquad> design_bandpass(double low_cut_hz, double high_cut_hz, double fs,
                                    int order);

/// Magnitude response of a section cascade at frequency `hz` (single pass).
double sos_gain_at(const std::vector<Biquad>& sos, double hz, double fs);

/// Zero-phase band-pass: reflect-pads by 3*filter_order samples, runs the
/// cascade forward and backward with step-matched initial conditions, trims.
/// Output has the same length as the input. Throws ConfigError when
/// fs <= 2*high_cut, SignalTooShort when the signal cannot cover the pad.
std::vector<double> bandpass(const std::vector<double>& signal, double fs,
                             const PrepConfig& cfg);

/// Rational-factor polyphase resampler (windowed-sinc, Kaiser beta=8).
/// Output length = round(len * fs_out / fs_in). fs_in == fs_out is identity.
std::vector<double> resample(const std::vector<double>& signal, double fs_in,
                             double fs_out);

/// Per-segment normalization to zero mean, unit (population) std. Segments
/// with std <= 1e-8 come back as all zeros.
std::vector<double> zscore(const std::vector<double>& segment);

}  // namespace hpaf
