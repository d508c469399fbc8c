#pragma once

// Shared test scaffolding: seeded tensor generators, the central-difference
// gradient checker, and the independent oracles the specs are frozen against.

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "hpaf/rng.hpp"
#include "hpaf/tensor.hpp"

namespace testsup {

using hpaf::Rng;
using hpaf::nn::Shape;
using hpaf::nn::Tensor;

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = true) {
  std::vector<double> data(hpaf::nn::shape_size(shape));
  for (double& v : data) v = rng.uniform(lo, hi);
  Tensor t = Tensor::from(std::move(shape), std::move(data));
  t.set_requires_grad(requires_grad);
  return t;
}

/// Pushes every entry away from zero so kinked ops (relu family, max pool)
/// stay locally smooth under the finite-difference step.
inline void nudge_from_zero(Tensor& t, double margin = 1e-3) {
  for (double& v : t.values_mut())
    if (std::abs(v) < margin) v = v < 0 ? -margin : margin;
}

/// Relative error with an absolute escape for near-zero pairs.
inline double rel_err(double a, double b) {
  double diff = std::abs(a - b);
  if (diff <= 1e-8) return 0.0;
  return diff / std::max(std::abs(a), std::abs(b));
}

struct FdReport {
  double max_rel_err = 0.0;
  int checks = 0;
};

using Entry = std::pair<size_t, size_t>;  // (param index, flat entry index)

inline std::vector<Entry> all_entries(const std::vector<Tensor>& params) {
  std::vector<Entry> out;
  for (size_t p = 0; p < params.size(); ++p)
    for (size_t i = 0; i < params[p].size(); ++i) out.emplace_back(p, i);
  return out;
}

inline std::vector<Entry> sample_entries(const std::vector<Tensor>& params, size_t n,
                                         Rng& rng) {
  auto all = all_entries(params);
  rng.shuffle(all);
  if (all.size() > n) all.resize(n);
  return all;
}

/// Central finite differences against reverse-mode gradients. loss_fn reads
/// the param tensors it captured and returns a scalar tensor; it is invoked
/// once under a tape (reverse pass) and twice per checked entry without one.
/// A probe whose stencil straddles a kink (relu-family activations are only
/// piecewise smooth) is retried with a tighter step; the tolerance itself
/// never loosens.
inline FdReport fd_check(std::vector<Tensor> params,
                         const std::function<Tensor()>& loss_fn,
                         const std::vector<Entry>& entries, double eps = 1e-5) {
  for (Tensor& p : params) p.zero_grad();
  std::vector<std::vector<double>> ad;
  {
    hpaf::nn::Tape tape;
    hpaf::nn::TapeScope scope(tape);
    Tensor loss = loss_fn();
    tape.backward(loss);
  }
  for (Tensor& p : params) {
    auto g = p.grad();
    ad.emplace_back(g.begin(), g.end());
  }
  FdReport rep;
  for (const auto& [pi, ei] : entries) {
    auto vals = params[pi].values_mut();
    double old = vals[ei];
    double err = 1e300;
    for (double step : {eps, eps / 10.0, eps / 100.0}) {
      vals[ei] = old + step;
      double f_plus = loss_fn().item();
      vals[ei] = old - step;
      double f_minus = loss_fn().item();
      vals[ei] = old;
      double fd = (f_plus - f_minus) / (2.0 * step);
      err = std::min(err, rel_err(ad[pi][ei], fd));
      if (err <= 1e-4) break;
    }
    rep.max_rel_err = std::max(rep.max_rel_err, err);
    ++rep.checks;
  }
  return rep;
}

/// fd_check over every entry of every param.
inline FdReport fd_check_all(std::vector<Tensor> params,
                             const std::function<Tensor()>& loss_fn, double eps = 1e-5) {
  return fd_check(params, loss_fn, all_entries(params), eps);
}

/// Fixed random weighting matching `like`, drawn once per instance so the
/// loss stays deterministic across repeated evaluations; used as
/// sum(mul(out, w)) to give the checked op a non-uniform upstream gradient.
inline Tensor loss_weights(const Tensor& like, Rng& rng) {
  std::vector<double> w(like.size());
  for (double& v : w) v = rng.uniform(-1.0, 1.0);
  return Tensor::from(like.shape(), std::move(w));
}

// ---------------------------------------------------------------------------
// Independent oracles
// ---------------------------------------------------------------------------

/// Format-212 encoder (tests only): packs sample pairs into byte triples.
inline std::vector<uint8_t> encode_format212(const std::vector<int32_t>& samples) {
  std::vector<uint8_t> out;
  for (size_t i = 0; i < samples.size(); i += 2) {
    uint32_t s0 = uint32_t(samples[i]) & 0xFFFu;
    uint32_t s1 = (i + 1 < samples.size() ? uint32_t(samples[i + 1]) : 0u) & 0xFFFu;
    out.push_back(uint8_t(s0 & 0xFFu));
    out.push_back(uint8_t(((s0 >> 8) & 0x0Fu) | ((s1 >> 8) << 4)));
    out.push_back(uint8_t(s1 & 0xFFu));
  }
  return out;
}

/// Scalar-loop Gabor oracle: direct evaluation of the kernel formula and its
/// zero-mean correction, independent of the tensor pipeline.
inline std::vector<double> gabor_oracle(double sigma, double f, double psi, int t_len) {
  f = std::min(std::max(f, 1e-3), 0.5 - 1e-9);
  int half = (t_len - 1) / 2;
  std::vector<double> g(size_t(t_len), 0.0);
  for (int i = 0; i < t_len; ++i) {
    double t = double(i - half);
    g[size_t(i)] = std::exp(-t * t / (2.0 * sigma * sigma)) *
                   std::cos(2.0 * 3.14159265358979323846 * f * t + psi);
  }
  double mean = 0.0;
  for (double v : g) mean += v;
  mean /= double(t_len);
  for (double& v : g) v -= mean;
  return g;
}

/// O(n^2) pairwise AUC oracle (ties count one half).
inline double auc_oracle(const std::vector<double>& genuine,
                         const std::vector<double>& impostor) {
  double numer = 0.0;
  for (double g : genuine)
    for (double i : impostor) numer += g > i ? 1.0 : (g == i ? 0.5 : 0.0);
  return numer / (double(genuine.size()) * double(impostor.size()));
}

/// Brute-force threshold sweep for the equal error rate: identical rule as
/// the implementation contract, evaluated naively.
inline double eer_oracle(const std::vector<double>& genuine,
                         const std::vector<double>& impostor) {
  std::vector<double> thresholds;
  thresholds.insert(thresholds.end(), genuine.begin(), genuine.end());
  thresholds.insert(thresholds.end(), impostor.begin(), impostor.end());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  thresholds.push_back(thresholds.back() + 1.0);
  double best_gap = 2.0, best = 1.0;
  for (double t : thresholds) {
    int fa = 0, fr = 0;
    for (double i : impostor)
      if (i >= t) ++fa;
    for (double g : genuine)
      if (g < t) ++fr;
    double far = double(fa) / double(impostor.size());
    double frr = double(fr) / double(genuine.size());
    if (std::abs(far - frr) < best_gap) {
      best_gap = std::abs(far - frr);
      best = (far + frr) / 2.0;
    }
  }
  return best;
}

/// Unique scratch directory under the system temp root.
inline std::string scratch_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() /
             ("hpaf_test_" + tag + "_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace testsup
