#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace hpaf::nn {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
size_t shape_size(const Shape& s);

struct TensorImpl {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized lazily; same length as value once touched
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

/// Dense 64-bit float tensor, row-major, value semantics over a shared node.
/// Copies alias the same storage; gradients accumulate on the node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor scalar(double v);
  static Tensor from(Shape shape, std::vector<double> data);
  /// Leaf parameter: requires_grad set.
  static Tensor param(Shape shape, std::vector<double> data);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int dim(int i) const { return impl_->shape[size_t(i)]; }
  int rank() const { return int(impl_->shape.size()); }
  size_t size() const { return impl_->value.size(); }

  std::span<const double> values() const { return impl_->value; }
  std::span<double> values_mut() { return impl_->value; }
  double at(size_t i) const { return impl_->value[i]; }
  /// Value of a 1-element tensor.
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool b) { impl_->requires_grad = b; }
  std::span<const double> grad() const;
  void zero_grad();

  std::shared_ptr<TensorImpl> impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;
  friend Tensor make_tensor(Shape, std::vector<double>);
};

Tensor make_tensor(Shape shape, std::vector<double> data);

/// Records the operations of one forward pass so gradients can be replayed
/// in exact reverse order. Activate with a TapeScope; ops record themselves
/// whenever a tape is active and an input requires grad.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  /// Seeds d(root)/d(root) = 1 and walks the recorded ops backwards,
  /// accumulating into every reachable grad buffer. Throws ContractError if
  /// root is not a scalar.
  void backward(const Tensor& root);

  size_t size() const { return ops_.size(); }
  void clear() { ops_.clear(); }

  void record(std::function<void()> back) { ops_.push_back(std::move(back)); }

 private:
  std::vector<std::function<void()>> ops_;
};

class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

enum class Pad { valid, same };

// ---------------------------------------------------------------------------
// Differentiable primitives. Elementwise binaries broadcast numpy-style over
// trailing dimensions (a size-1 dim stretches).
// ---------------------------------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);
Tensor scalar_mul(const Tensor& x, double c);
Tensor exp(const Tensor& x);
Tensor cos(const Tensor& x);
/// Pass-through gradient inside [lo, hi], zero outside.
Tensor clamp(const Tensor& x, double lo, double hi);
Tensor leaky_relu(const Tensor& x, double slope);
/// max(x, 0): subgradient 0 at the kink.
Tensor relu(const Tensor& x);

Tensor matmul(const Tensor& a, const Tensor& b);  // 2D@2D, 2D@1D, 1D@2D
Tensor transpose(const Tensor& x);                // 2D only
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(const std::vector<Tensor>& xs, int axis);
Tensor select_row(const Tensor& x, int row);  // 2D -> 1D
Tensor select(const Tensor& x, int index);    // 1D -> scalar [1]
/// Stacks N equal-length vectors into an N x D matrix.
Tensor stack_rows(const std::vector<Tensor>& rows);

Tensor sum(const Tensor& x);             // all elements -> [1]
Tensor mean(const Tensor& x, int axis);  // 2D -> 1D; 1D with axis 0 -> [1]

/// y = W x + b for vectors, or X W^T + b row-wise for 2D inputs.
/// W is [out, in], b is [out].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

/// Cross-correlation (no kernel flip): x [Cin, L], w [Cout, Cin, K].
Tensor conv1d(const Tensor& x, const Tensor& w, int stride, Pad padding);
Tensor max_pool1d(const Tensor& x, int kernel, int stride);
Tensor avg_pool1d(const Tensor& x, int kernel, int stride);

Tensor softmax(const Tensor& x, int axis);
/// Normalizes the last axis; gain and bias are [D].
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

Tensor l2_norm(const Tensor& x);                      // -> [1]
Tensor cosine_sim(const Tensor& a, const Tensor& b);  // 1D, 1D -> [1]

/// Cosine similarity on raw buffers (no autodiff), shared by mining, matching
/// and the metrics so all similarity scores agree bit-for-bit.
double cosine_raw(std::span<const double> a, std::span<const double> b);

// ---------------------------------------------------------------------------
// Optimizer: SGD with momentum under a cosine-annealing schedule.
// ---------------------------------------------------------------------------
struct OptimizerConfig {
  double momentum = 0.9;
  double base_lr = 1e-4;
  double eta_min = 0.0;
  int t_max = 40;
};

/// lr(t) = eta_min + (base_lr - eta_min) * (1 + cos(pi t / T_max)) / 2.
/// Throws ContractError outside [0, T_max].
double lr_at(int t, const OptimizerConfig& cfg);

class SgdOptimizer {
 public:
  SgdOptimizer(std::vector<Tensor> params, OptimizerConfig cfg);

  /// v <- momentum * v + grad; p <- p - lr * v.
  void step(double lr);
  void zero_grad();
  const OptimizerConfig& config() const { return cfg_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> velocity_;
  OptimizerConfig cfg_;
};

// ---------------------------------------------------------------------------
// Checkpoints: versioned binary dump of named tensors, bit-exact round trip.
// ---------------------------------------------------------------------------
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

void save_checkpoint(const std::string& path, const NamedTensors& tensors);
NamedTensors load_checkpoint(const std::string& path);

}  // namespace hpaf::nn
