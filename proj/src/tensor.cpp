#include "hpaf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "hpaf/errors.hpp"

namespace hpaf::nn {
namespace {

thread_local Tape* g_active_tape = nullptr;

using Impl = std::shared_ptr<TensorImpl>;

bool should_record(std::initializer_list<const Tensor*> ins) {
  if (!g_active_tape) return false;
  for (const Tensor* t : ins)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

void record(Tensor& out, std::function<void()> back) {
  out.set_requires_grad(true);
  g_active_tape->record(std::move(back));
}

[[noreturn]] void shape_error(const std::string& op, const Shape& a, const Shape& b) {
  throw ShapeError(op + ": incompatible shapes " + shape_str(a) + " and " +
                   shape_str(b));
}

bool bcast_shape(const Shape& a, const Shape& b, Shape& out) {
  size_t ro = std::max(a.size(), b.size());
  out.assign(ro, 1);
  for (size_t i = 0; i < ro; ++i) {
    int da = i < a.size() ? a[a.size() - 1 - i] : 1;
    int db = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (da == db)
      out[ro - 1 - i] = da;
    else if (da == 1)
      out[ro - 1 - i] = db;
    else if (db == 1)
      out[ro - 1 - i] = da;
    else
      return false;
  }
  return true;
}

// Iterates the broadcast output, handing flat indices into out, a, and b.
template <class Fn>
void bcast_iter(const Shape& out, const Shape& a, const Shape& b, Fn&& fn) {
  size_t ro = out.size();
  std::vector<size_t> sa(ro, 0), sb(ro, 0);
  size_t stride = 1;
  for (size_t i = 0; i < a.size(); ++i) {
    size_t d = a.size() - 1 - i;
    size_t od = ro - 1 - i;
    sa[od] = (a[d] == 1 && out[od] != 1) ? 0 : stride;
    stride *= size_t(a[d]);
  }
  stride = 1;
  for (size_t i = 0; i < b.size(); ++i) {
    size_t d = b.size() - 1 - i;
    size_t od = ro - 1 - i;
    sb[od] = (b[d] == 1 && out[od] != 1) ? 0 : stride;
    stride *= size_t(b[d]);
  }
  size_t total = shape_size(out);
  std::vector<int> idx(ro, 0);
  size_t ai = 0, bi = 0;
  for (size_t oi = 0; oi < total; ++oi) {
    fn(oi, ai, bi);
    for (size_t d = ro; d-- > 0;) {
      ++idx[d];
      ai += sa[d];
      bi += sb[d];
      if (idx[d] < out[d]) break;
      ai -= sa[d] * size_t(out[d]);
      bi -= sb[d] * size_t(out[d]);
      idx[d] = 0;
    }
  }
}

enum class BinOp { add, sub, mul };

Tensor binary(const char* name, BinOp op, const Tensor& a, const Tensor& b) {
  Shape os;
  if (!bcast_shape(a.shape(), b.shape(), os)) shape_error(name, a.shape(), b.shape());
  std::vector<double> data(shape_size(os));
  auto av = a.values(), bv = b.values();
  bcast_iter(os, a.shape(), b.shape(), [&](size_t oi, size_t ai, size_t bi) {
    switch (op) {
      case BinOp::add: data[oi] = av[ai] + bv[bi]; break;
      case BinOp::sub: data[oi] = av[ai] - bv[bi]; break;
      case BinOp::mul: data[oi] = av[ai] * bv[bi]; break;
    }
  });
  Tensor out = make_tensor(os, std::move(data));
  if (should_record({&a, &b})) {
    Impl ia = a.impl(), ib = b.impl(), io = out.impl();
    Shape sa = a.shape(), sb = b.shape(), so = os;
    record(out, [=] {
      if (io->grad.empty()) return;
      bool ga = ia->requires_grad, gb = ib->requires_grad;
      if (ga) ia->ensure_grad();
      if (gb) ib->ensure_grad();
      bcast_iter(so, sa, sb, [&](size_t oi, size_t aix, size_t bix) {
        double go = io->grad[oi];
        switch (op) {
          case BinOp::add:
            if (ga) ia->grad[aix] += go;
            if (gb) ib->grad[bix] += go;
            break;
          case BinOp::sub:
            if (ga) ia->grad[aix] += go;
            if (gb) ib->grad[bix] -= go;
            break;
          case BinOp::mul:
            if (ga) ia->grad[aix] += go * ib->value[bix];
            if (gb) ib->grad[bix] += go * ia->value[aix];
            break;
        }
      });
    });
  }
  return out;
}

// Elementwise unary with y = f(x), dy/dx computed from (x, y).
template <class F, class DF>
Tensor unary(const Tensor& x, F&& f, DF&& df) {
  std::vector<double> data(x.size());
  auto xv = x.values();
  for (size_t i = 0; i < data.size(); ++i) data[i] = f(xv[i]);
  Tensor out = make_tensor(x.shape(), std::move(data));
  if (should_record({&x})) {
    Impl ix = x.impl(), io = out.impl();
    auto dfn = df;
    record(out, [=] {
      if (io->grad.empty()) return;
      ix->ensure_grad();
      for (size_t i = 0; i < io->grad.size(); ++i)
        ix->grad[i] += io->grad[i] * dfn(ix->value[i], io->value[i]);
    });
  }
  return out;
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream ss;
  ss << '[';
  for (size_t i = 0; i < s.size(); ++i) ss << (i ? "," : "") << s[i];
  ss << ']';
  return ss.str();
}

size_t shape_size(const Shape& s) {
  size_t n = 1;
  for (int d : s) n *= size_t(d);
  return n;
}

Tensor make_tensor(Shape shape, std::vector<double> data) {
  auto impl = std::make_shared<TensorImpl>();
  if (shape_size(shape) != data.size())
    throw ShapeError("tensor: shape " + shape_str(shape) + " wants " +
                     std::to_string(shape_size(shape)) + " values, got " +
                     std::to_string(data.size()));
  impl->shape = std::move(shape);
  impl->value = std::move(data);
  return Tensor(std::move(impl));
}

Tensor Tensor::zeros(Shape shape) {
  size_t n = shape_size(shape);
  return make_tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(Shape shape, double v) {
  size_t n = shape_size(shape);
  return make_tensor(std::move(shape), std::vector<double>(n, v));
}

Tensor Tensor::scalar(double v) { return make_tensor({1}, {v}); }

Tensor Tensor::from(Shape shape, std::vector<double> data) {
  return make_tensor(std::move(shape), std::move(data));
}

Tensor Tensor::param(Shape shape, std::vector<double> data) {
  Tensor t = make_tensor(std::move(shape), std::move(data));
  t.set_requires_grad(true);
  return t;
}

double Tensor::item() const {
  if (size() != 1)
    throw ContractError("item(): tensor has " + std::to_string(size()) + " elements");
  return impl_->value[0];
}

std::span<const double> Tensor::grad() const {
  impl_->ensure_grad();
  return impl_->grad;
}

void Tensor::zero_grad() {
  impl_->ensure_grad();
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tape* Tape::active() { return g_active_tape; }

void Tape::backward(const Tensor& root) {
  if (!root.defined() || root.size() != 1)
    throw ContractError("backward: root must be a defined scalar tensor");
  auto impl = root.impl();
  impl->ensure_grad();
  impl->grad[0] = 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

TapeScope::TapeScope(Tape& tape) : prev_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = prev_; }

Tensor add(const Tensor& a, const Tensor& b) { return binary("add", BinOp::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary("sub", BinOp::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary("mul", BinOp::mul, a, b); }

Tensor neg(const Tensor& x) {
  return unary(x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor scalar_mul(const Tensor& x, double c) {
  return unary(x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

Tensor exp(const Tensor& x) {
  return unary(x, [](double v) { return std::exp(v); },
               [](double, double y) { return y; });
}

Tensor cos(const Tensor& x) {
  return unary(x, [](double v) { return std::cos(v); },
               [](double v, double) { return -std::sin(v); });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return unary(x, [lo, hi](double v) { return std::min(std::max(v, lo), hi); },
               [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  return unary(x, [slope](double v) { return v > 0.0 ? v : slope * v; },
               [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Tensor relu(const Tensor& x) { return leaky_relu(x, 0.0); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  int m, k, n;
  bool a_vec = sa.size() == 1, b_vec = sb.size() == 1;
  if (sa.size() == 2 && sb.size() == 2) {
    m = sa[0], k = sa[1], n = sb[1];
    if (sb[0] != k) shape_error("matmul", sa, sb);
  } else if (sa.size() == 2 && b_vec) {
    m = sa[0], k = sa[1], n = 1;
    if (sb[0] != k) shape_error("matmul", sa, sb);
  } else if (a_vec && sb.size() == 2) {
    m = 1, k = sa[0], n = sb[1];
    if (sb[0] != k) shape_error("matmul", sa, sb);
  } else {
    shape_error("matmul", sa, sb);
  }
  std::vector<double> data(size_t(m) * size_t(n), 0.0);
  auto av = a.values(), bv = b.values();
  for (int i = 0; i < m; ++i)
    for (int l = 0; l < k; ++l) {
      double ail = av[size_t(i * k + l)];
      if (ail == 0.0) continue;
      for (int j = 0; j < n; ++j) data[size_t(i * n + j)] += ail * bv[size_t(l * n + j)];
    }
  Shape os = a_vec ? Shape{n} : (b_vec ? Shape{m} : Shape{m, n});
  Tensor out = make_tensor(os, std::move(data));
  if (should_record({&a, &b})) {
    Impl ia = a.impl(), ib = b.impl(), io = out.impl();
    record(out, [=] {
      if (io->grad.empty()) return;
      if (ia->requires_grad) {
        ia->ensure_grad();
        for (int i = 0; i < m; ++i)
          for (int l = 0; l < k; ++l) {
            double acc = 0.0;
            for (int j = 0; j < n; ++j)
              acc += io->grad[size_t(i * n + j)] * ib->value[size_t(l * n + j)];
            ia->grad[size_t(i * k + l)] += acc;
          }
      }
      if (ib->requires_grad) {
        ib->ensure_grad();
        for (int l = 0; l < k; ++l)
          for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int i = 0; i < m; ++i)
              acc += ia->value[size_t(i * k + l)] * io->grad[size_t(i * n + j)];
            ib->grad[size_t(l * n + j)] += acc;
          }
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("transpose: expected 2D, got " + shape_str(x.shape()));
  int n = x.dim(0), m = x.dim(1);
  std::vector<double> data(size_t(n) * size_t(m));
  auto xv = x.values();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) data[size_t(j * n + i)] = xv[size_t(i * m + j)];
  Tensor out = make_tensor({m, n}, std::move(data));
  if (should_record({&x})) {
    Impl ix = x.impl(), io = out.impl();
    record(out, [=] {
      if (io->grad.empty()) return;
      ix->ensure_grad();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j)
          ix->grad[size_t(i * m + j)] += io->grad[size_t(j * n + i)];
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size())
    throw ShapeError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape) +
                     " changes element count");
  std::vector<double> data(x.values().begin(), x.values().end());
  Tensor out = make_tensor(std::move(shape), std::move(data));
  if (should_record({&x})) {
    Impl ix = x.impl(), io = out.impl();
    record(out, [=] {
      if (io->grad.empty()) return;
      ix->ensure_grad();
      for (size_t i = 0; i < io->grad.size(); ++i) ix->grad[i] += io->grad[i];
    });
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& xs, int axis) {
  if (xs.empty()) throw ShapeError("concat: no inputs");
  int rank = xs[0].rank();
  if (axis < 0 || axis >= rank)
    throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(rank));
  Shape os = xs[0].shape();
  os[size_t(axis)] = 0;
  for (const Tensor& x : xs) {
    if (x.rank() != rank) shape_error("concat", xs[0].shape(), x.shape());
    for (int d = 0; d < rank; ++d)
      if (d != axis && x.dim(d) != xs[0].dim(d))
        shape_error("concat", xs[0].shape(), x.shape());
    os[size_t(axis)] += x.dim(axis);
  }
  size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= size_t(os[size_t(d)]);
  for (int d = axis + 1; d < rank; ++d) inner *= size_t(os[size_t(d)]);
  size_t out_axis = size_t(os[size_t(axis)]);
  std::vector<double> data(outer * out_axis * inner);
  size_t offset = 0;
  for (const Tensor& x : xs) {
    size_t ax = size_t(x.dim(axis));
    auto xv = x.values();
    for (size_t o = 0; o < outer; ++o)
      std::copy_n(xv.data() + o * ax * inner, ax * inner,
                  data.data() + (o * out_axis + offset) * inner);
    offset += ax;
  }
  Tensor out = make_tensor(os, std::move(data));
  bool rec = false;
  for (const Tensor& x : xs)
    if (should_record({&x})) rec = true;
  if (rec) {
    std::vector<Impl> impls;
    std::vector<size_t> axes;
    for (const Tensor& x : xs) {
      impls.push_back(x.impl());
      axes.push_back(size_t(x.dim(axis)));
    }
    Impl io = out.impl();
    record(out, [=] {
      if (io->grad.empty()) return;
      size_t off = 0;
      for (size_t t = 0; t < impls.size(); ++t) {
        if (impls[t]->requires_grad) {
          impls[t]->ensure_grad();
          for (size_t o = 0; o < outer; ++o)
            for (size_t i = 0; i < axes[t] * inner; ++i)
              impls[t]->grad[o * axes[t] * inner + i] +=
                  io->grad[(o * out_axis + off) * inner + i];
        }
        off += axes[t];
      }
    });
  }
  return out;
}

Tensor select_row(const Tensor& x, int row) {
  if (x.rank() != 2) throw ShapeError("select_row: expected 2D, got " + shape_str(x.shape()));
  int n = x.dim(0), d = x.dim(1);
  if (row < 0 || row >= n)
    throw ShapeError("select_row: row " + std::to_string(row) + " out of " +
                     std::to_string(n));
  auto xv = x.values();
  std::vector<double> data(xv.begin() + size_t(row) * size_t(d),
                           xv.begin() + size_t(row + 1) * size_t(d));
  Tensor out = make_tensor({d}, std::move(data));
  if (should_record({&x})) {
    Impl ix = x.impl(), io = out.impl();
    record(out, [=] {
      if (io->grad.empty()) return;
      ix->ensure_grad();
      for (int i = 0; i < d; ++i)
        ix->grad[size_t(row) * size_t(d) + size_t(i)] += io->grad[size_t(i)];
    });
  }
  return out;
}

Tensor select(const Tensor& x, int index) {
  if (x.rank() != 1) throw ShapeError("select: expected 1D, got " + shape_str(x.shape()));
  if (index < 0 || index >= x.dim(0))
    throw ShapeError("select: index " + std::to_string(index) + " out of " +
                     std::to_string(x.dim(0)));
  Tensor out = make_tensor({1}, {x.at(size_t(index))});
  if (should_record({&x})) {
    Impl ix = x.impl(), io = out.impl();
    record(out, [=] {
      if (io->grad.empty()) return;
      ix->ensure_grad();
      ix->grad[size_t(index)] += io->grad[0];
    });
  }
  return out;
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no inputs");
  std::vector<Tensor> reshaped;
  reshaped.reserve(rows.size());
  for (const Tensor& r : rows) {
    if (r.rank() != 1) throw ShapeError("stack_rows: expected 1D rows");
    reshaped.push_back(reshape(r, {1, r.dim(0)}));
  }
  return concat(reshaped, 0);
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  Tensor out = make_tensor({1}, {s});
  if (should_record({&x})) {
    Impl ix = x.impl(), io = out.impl();
    record(out, [=] {
      if (io->grad.empty()) return;
      ix->ensure_grad();
      for (double& g : ix->grad) g += io->grad[0];
    });
  }
  return out;
}

Tensor mean(const Tensor& x, int axis) {
  if (x.rank() == 1) {
    if (axis != 0) throw ShapeError("mean: axis out of range for 1D");
    Tensor s = sum(x);
    return scalar_mul(s, 1.0 / double(x.dim(0)));
  }
  if (x.rank() != 2 || (axis != 0 && axis != 1))
    throw ShapeError("mean: expected 1D/2D with valid axis, got " + shape_str(x.shape()));
  int n = x.dim(0), m = x.dim(1);
  auto xv = x.values();
  Shape os = axis == 0 ? Shape{m} : Shape{n};
  int keep = axis == 0 ? m : n;
  int red = axis == 0 ? n : m;
  std::vector<double> data(size_t(keep), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) data[size_t(axis == 0 ? j : i)] += xv[size_t(i * m + j)];
  for (double& v : data) v /= double(red);
  Tensor out = make_tensor(os, std::move(data));
  if (should_record({&x})) {
    Impl ix = x.impl(), io = out.impl();
    record(out, [=] {
      if (io->grad.empty()) return;
      ix->ensure_grad();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j)
          ix->grad[size_t(i * m + j)] +=
              io->grad[size_t(axis == 0 ? j : i)] / double(red);
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (w.rank() != 2 || b.rank() != 1 || b.dim(0) != w.dim(0))
    throw ShapeError("linear: weight " + shape_str(w.shape()) + " / bias " +
                     shape_str(b.shape()) + " mismatch");
  int out_dim = w.dim(0), in_dim = w.dim(1);
  bool vec = x.rank() == 1;
  int rows = vec ? 1 : x.dim(0);
  if ((vec && x.dim(0) != in_dim) || (!vec && (x.rank() != 2 || x.dim(1) != in_dim)))
    shape_error("linear", x.shape(), w.shape());
  auto xv = x.values();
  auto wv = w.values();
  auto bv = b.values();
  std::vector<double> data(size_t(rows) * size_t(out_dim));
  for (int r = 0; r < rows; ++r)
    for (int o = 0; o < out_dim; ++o) {
      double acc = bv[size_t(o)];
      for (int i = 0; i < in_dim; ++i)
        acc += wv[size_t(o * in_dim + i)] * xv[size_t(r * in_dim + i)];
      data[size_t(r * out_dim + o)] = acc;
    }
  Tensor out = make_tensor(vec ? Shape{out_dim} : Shape{rows, out_dim}, std::move(data));
  if (should_record({&x, &w, &b})) {
    Impl ix = x.impl(), iw = w.impl(), ib = b.impl(), io = out.impl();
    record(out, [=] {
      if (io->grad.empty()) return;
      if (ix->requires_grad) ix->ensure_grad();
      if (iw->requires_grad) iw->ensure_grad();
      if (ib->requires_grad) ib->ensure_grad();
      for (int r = 0; r < rows; ++r)
        for (int o = 0; o < out_dim; ++o) {
          double go = io->grad[size_t(r * out_dim + o)];
          if (go == 0.0) continue;
          if (ib->requires_grad) ib->grad[size_t(o)] += go;
          for (int i = 0; i < in_dim; ++i) {
            if (iw->requires_grad)
              iw->grad[size_t(o * in_dim + i)] += go * ix->value[size_t(r * in_dim + i)];
            if (ix->requires_grad)
              ix->grad[size_t(r * in_dim + i)] += go * iw->value[size_t(o * in_dim + i)];
          }
        }
    });
  }
  return out;
}

namespace {

struct ConvDims {
  int cin, len, cout, k, lout, pad_left;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, Pad padding) {
  if (x.rank() != 2 || w.rank() != 3) shape_error("conv1d", x.shape(), w.shape());
  if (stride < 1) throw ShapeError("conv1d: stride must be >= 1");
  ConvDims d;
  d.cin = x.dim(0);
  d.len = x.dim(1);
  d.cout = w.dim(0);
  d.k = w.dim(2);
  if (w.dim(1) != d.cin) shape_error("conv1d", x.shape(), w.shape());
  if (padding == Pad::valid) {
    if (d.len < d.k)
      throw ShapeError("conv1d: input length " + std::to_string(d.len) +
                       " shorter than kernel " + std::to_string(d.k));
    d.lout = (d.len - d.k) / stride + 1;
    d.pad_left = 0;
  } else {
    d.lout = (d.len + stride - 1) / stride;
    int pad_total = std::max(0, (d.lout - 1) * stride + d.k - d.len);
    d.pad_left = pad_total / 2;
  }
  return d;
}

}  // namespace

Tensor conv1d(const Tensor& x, const Tensor& w, int stride, Pad padding) {
  ConvDims d = conv_dims(x, w, stride, padding);
  auto xv = x.values();
  auto wv = w.values();
  std::vector<double> data(size_t(d.cout) * size_t(d.lout), 0.0);
  for (int co = 0; co < d.cout; ++co)
    for (int j = 0; j < d.lout; ++j) {
      double acc = 0.0;
      int start = j * stride - d.pad_left;
      for (int ci = 0; ci < d.cin; ++ci) {
        const double* wp = &wv[size_t((co * d.cin + ci) * d.k)];
        const double* xp = &xv[size_t(ci * d.len)];
        int t0 = std::max(0, -start);
        int t1 = std::min(d.k, d.len - start);
        for (int t = t0; t < t1; ++t) acc += wp[t] * xp[start + t];
      }
      data[size_t(co * d.lout + j)] = acc;
    }
  Tensor out = make_tensor({d.cout, d.lout}, std::move(data));
  if (should_record({&x, &w})) {
    Impl ix = x.impl(), iw = w.impl(), io = out.impl();
    record(out, [=] {
      if (io->grad.empty()) return;
      if (ix->requires_grad) ix->ensure_grad();
      if (iw->requires_grad) iw->ensure_grad();
      for (int co = 0; co < d.cout; ++co)
        for (int j = 0; j < d.lout; ++j) {
          double go = io->grad[size_t(co * d.lout + j)];
          if (go == 0.0) continue;
          int start = j * stride - d.pad_left;
          for (int ci = 0; ci < d.cin; ++ci) {
            int t0 = std::max(0, -start);
            int t1 = std::min(d.k, d.len - start);
            for (int t = t0; t < t1; ++t) {
              if (iw->requires_grad)
                iw->grad[size_t((co * d.cin + ci) * d.k + t)] +=
                    go * ix->value[size_t(ci * d.len + start + t)];
              if (ix->requires_grad)
                ix->grad[size_t(ci * d.len + start + t)] +=
                    go * iw->value[size_t((co * d.cin + ci) * d.k + t)];
            }
          }
        }
    });
  }
  return out;
}

Tensor max_pool1d(const Tensor& x, int kernel, int stride) {
  if (x.rank() != 2) throw ShapeError("max_pool1d: expected 2D, got " + shape_str(x.shape()));
  if (kernel < 1 || stride < 1) throw ShapeError("max_pool1d: kernel/stride must be >= 1");
  int c = x.dim(0), len = x.dim(1);
  if (len < kernel)
    throw ShapeError("max_pool1d: length " + std::to_string(len) + " < kernel " +
                     std::to_string(kernel));
  int lout = (len - kernel) / stride + 1;
  auto xv = x.values();
  std::vector<double> data(size_t(c) * size_t(lout));
  std::vector<int> arg(size_t(c) * size_t(lout));
  for (int ci = 0; ci < c; ++ci)
    for (int j = 0; j < lout; ++j) {
      int best = j * stride;
      for (int t = 1; t < kernel; ++t)
        if (xv[size_t(ci * len + j * stride + t)] > xv[size_t(ci * len + best)])
          best = j * stride + t;
      data[size_t(ci * lout + j)] = xv[size_t(ci * len + best)];
      arg[size_t(ci * lout + j)] = best;
    }
  Tensor out = make_tensor({c, lout}, std::move(data));
  if (should_record({&x})) {
    Impl ix = x.impl(), io = out.impl();
    record(out, [=, arg = std::move(arg)] {
      if (io->grad.empty()) return;
      ix->ensure_grad();
      for (int ci = 0; ci < c; ++ci)
        for (int j = 0; j < lout; ++j)
          ix->grad[size_t(ci * len + arg[size_t(ci * lout + j)])] +=
              io->grad[size_t(ci * lout + j)];
    });
  }
  return out;
}

Tensor avg_pool1d(const Tensor& x, int kernel, int stride) {
  if (x.rank() != 2) throw ShapeError("avg_pool1d: expected 2D, got " + shape_str(x.shape()));
  if (kernel < 1 || stride < 1) throw ShapeError("avg_pool1d: kernel/stride must be >= 1");
  int c = x.dim(0), len = x.dim(1);
  if (len < kernel)
    throw ShapeError("avg_pool1d: length " + std::to_string(len) + " < kernel " +
                     std::to_string(kernel));
  int lout = (len - kernel) / stride + 1;
  auto xv = x.values();
  std::vector<double> data(size_t(c) * size_t(lout), 0.0);
  for (int ci = 0; ci < c; ++ci)
    for (int j = 0; j < lout; ++j) {
      double acc = 0.0;
      for (int t = 0; t < kernel; ++t) acc += xv[size_t(ci * len + j * stride + t)];
      data[size_t(ci * lout + j)] = acc / double(kernel);
    }
  Tensor out = make_tensor({c, lout}, std::move(data));
  if (should_record({&x})) {
    Impl ix = x.impl(), io = out.impl();
    record(out, [=] {
      if (io->grad.empty()) return;
      ix->ensure_grad();
      for (int ci = 0; ci < c; ++ci)
        for (int j = 0; j < lout; ++j) {
          double g = io->grad[size_t(ci * lout + j)] / double(kernel);
          for (int t = 0; t < kernel; ++t)
            ix->grad[size_t(ci * len + j * stride + t)] += g;
        }
    });
  }
  return out;
}

namespace {

// Applies fn to each 1D line of a 1D/2D tensor along `axis`.
// fn(base, stride, count).
template <class Fn>
void for_each_line(const Shape& s, int axis, Fn&& fn) {
  if (s.size() == 1) {
    fn(size_t(0), size_t(1), size_t(s[0]));
    return;
  }
  int n = s[0], m = s[1];
  if (axis == 1) {
    for (int i = 0; i < n; ++i) fn(size_t(i * m), size_t(1), size_t(m));
  } else {
    for (int j = 0; j < m; ++j) fn(size_t(j), size_t(m), size_t(n));
  }
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
  if (x.rank() > 2 || axis < 0 || axis >= x.rank())
    throw ShapeError("softmax: bad axis " + std::to_string(axis) + " for shape " +
                     shape_str(x.shape()));
  auto xv = x.values();
  std::vector<double> data(x.size());
  for_each_line(x.shape(), axis, [&](size_t base, size_t stride, size_t count) {
    double mx = -1e300;
    for (size_t i = 0; i < count; ++i) mx = std::max(mx, xv[base + i * stride]);
    double z = 0.0;
    for (size_t i = 0; i < count; ++i) {
      double e = std::exp(xv[base + i * stride] - mx);
      data[base + i * stride] = e;
      z += e;
    }
    for (size_t i = 0; i < count; ++i) data[base + i * stride] /= z;
  });
  Tensor out = make_tensor(x.shape(), std::move(data));
  if (should_record({&x})) {
    Impl ix = x.impl(), io = out.impl();
    Shape s = x.shape();
    record(out, [=] {
      if (io->grad.empty()) return;
      ix->ensure_grad();
      for_each_line(s, axis, [&](size_t base, size_t stride, size_t count) {
        double dot = 0.0;
        for (size_t i = 0; i < count; ++i)
          dot += io->grad[base + i * stride] * io->value[base + i * stride];
        for (size_t i = 0; i < count; ++i)
          ix->grad[base + i * stride] +=
              io->value[base + i * stride] * (io->grad[base + i * stride] - dot);
      });
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  int d = x.rank() == 1 ? x.dim(0) : x.dim(x.rank() - 1);
  if (x.rank() > 2 || gain.rank() != 1 || bias.rank() != 1 || gain.dim(0) != d ||
      bias.dim(0) != d)
    throw ShapeError("layer_norm: input " + shape_str(x.shape()) + " with gain " +
                     shape_str(gain.shape()) + " / bias " + shape_str(bias.shape()));
  int rows = x.rank() == 1 ? 1 : x.dim(0);
  auto xv = x.values();
  auto gv = gain.values();
  auto bv = bias.values();
  std::vector<double> data(x.size());
  std::vector<double> istds(size_t(rows), 0.0);
  for (int r = 0; r < rows; ++r) {
    const double* xp = &xv[size_t(r * d)];
    double mu = 0.0;
    for (int i = 0; i < d; ++i) mu += xp[i];
    mu /= double(d);
    double var = 0.0;
    for (int i = 0; i < d; ++i) var += (xp[i] - mu) * (xp[i] - mu);
    var /= double(d);
    double istd = 1.0 / std::sqrt(var + eps);
    istds[size_t(r)] = istd;
    for (int i = 0; i < d; ++i)
      data[size_t(r * d + i)] = gv[size_t(i)] * (xp[i] - mu) * istd + bv[size_t(i)];
  }
  Tensor out = make_tensor(x.shape(), std::move(data));
  if (should_record({&x, &gain, &bias})) {
    Impl ix = x.impl(), ig = gain.impl(), ib = bias.impl(), io = out.impl();
    record(out, [=, istds = std::move(istds)] {
      if (io->grad.empty()) return;
      if (ix->requires_grad) ix->ensure_grad();
      if (ig->requires_grad) ig->ensure_grad();
      if (ib->requires_grad) ib->ensure_grad();
      for (int r = 0; r < rows; ++r) {
        const double* xp = &ix->value[size_t(r * d)];
        const double* gop = &io->grad[size_t(r * d)];
        double istd = istds[size_t(r)];
        double mu = 0.0;
        for (int i = 0; i < d; ++i) mu += xp[i];
        mu /= double(d);
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (int i = 0; i < d; ++i) {
          double xhat = (xp[i] - mu) * istd;
          double dxhat = gop[i] * ig->value[size_t(i)];
          sum_dxhat += dxhat;
          sum_dxhat_xhat += dxhat * xhat;
          if (ig->requires_grad) ig->grad[size_t(i)] += gop[i] * xhat;
          if (ib->requires_grad) ib->grad[size_t(i)] += gop[i];
        }
        if (ix->requires_grad)
          for (int i = 0; i < d; ++i) {
            double xhat = (xp[i] - mu) * istd;
            double dxhat = gop[i] * ig->value[size_t(i)];
            ix->grad[size_t(r * d + i)] +=
                istd * (dxhat - sum_dxhat / double(d) - xhat * sum_dxhat_xhat / double(d));
          }
      }
    });
  }
  return out;
}

Tensor l2_norm(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v * v;
  double norm = std::sqrt(s);
  Tensor out = make_tensor({1}, {norm});
  if (should_record({&x})) {
    Impl ix = x.impl(), io = out.impl();
    record(out, [=] {
      if (io->grad.empty()) return;
      ix->ensure_grad();
      double denom = std::max(io->value[0], 1e-300);
      for (size_t i = 0; i < ix->value.size(); ++i)
        ix->grad[i] += io->grad[0] * ix->value[i] / denom;
    });
  }
  return out;
}

double cosine_raw(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  double denom = std::sqrt(na) * std::sqrt(nb);
  if (denom < 1e-300) return 0.0;
  return dot / denom;
}

Tensor cosine_sim(const Tensor& a, const Tensor& b) {
  if (a.rank() != 1 || b.rank() != 1 || a.dim(0) != b.dim(0))
    shape_error("cosine_sim", a.shape(), b.shape());
  auto av = a.values(), bv = b.values();
  double dot = 0.0, na2 = 0.0, nb2 = 0.0;
  for (size_t i = 0; i < av.size(); ++i) {
    dot += av[i] * bv[i];
    na2 += av[i] * av[i];
    nb2 += bv[i] * bv[i];
  }
  double na = std::sqrt(na2), nb = std::sqrt(nb2);
  double denom = std::max(na * nb, 1e-300);
  double s = dot / denom;
  Tensor out = make_tensor({1}, {s});
  if (should_record({&a, &b})) {
    Impl ia = a.impl(), ib = b.impl(), io = out.impl();
    record(out, [=] {
      if (io->grad.empty()) return;
      double go = io->grad[0];
      double sval = io->value[0];
      if (ia->requires_grad) {
        ia->ensure_grad();
        for (size_t i = 0; i < ia->value.size(); ++i)
          ia->grad[i] += go * (ib->value[i] / denom -
                               sval * ia->value[i] / std::max(na2, 1e-300));
      }
      if (ib->requires_grad) {
        ib->ensure_grad();
        for (size_t i = 0; i < ib->value.size(); ++i)
          ib->grad[i] += go * (ia->value[i] / denom -
                               sval * ib->value[i] / std::max(nb2, 1e-300));
      }
    });
  }
  return out;
}

double lr_at(int t, const OptimizerConfig& cfg) {
  if (t < 0 || t > cfg.t_max)
    throw ContractError("lr_at: t=" + std::to_string(t) + " outside [0, " +
                        std::to_string(cfg.t_max) + "]");
  double frac = cfg.t_max == 0 ? 0.0 : double(t) / double(cfg.t_max);
  return cfg.eta_min +
         (cfg.base_lr - cfg.eta_min) * (1.0 + std::cos(3.14159265358979323846 * frac)) / 2.0;
}

SgdOptimizer::SgdOptimizer(std::vector<Tensor> params, OptimizerConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  velocity_.reserve(params_.size());
  for (const Tensor& p : params_) velocity_.emplace_back(p.size(), 0.0);
}

void SgdOptimizer::step(double lr) {
  for (size_t pi = 0; pi < params_.size(); ++pi) {
    auto impl = params_[pi].impl();
    impl->ensure_grad();
    auto& v = velocity_[pi];
    for (size_t i = 0; i < v.size(); ++i) {
      v[i] = cfg_.momentum * v[i] + impl->grad[i];
      impl->value[i] -= lr * v[i];
    }
  }
}

void SgdOptimizer::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

namespace {

template <class T>
void write_pod(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::ifstream& f, const std::string& path) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) throw ParseError("checkpoint truncated: " + path);
  return v;
}

constexpr uint32_t kCkptMagic = 0x46415048u;  // "HPAF"
constexpr uint32_t kCkptVersion = 1;

}  // namespace

void save_checkpoint(const std::string& path, const NamedTensors& tensors) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint: " + path);
  write_pod(f, kCkptMagic);
  write_pod(f, kCkptVersion);
  write_pod(f, uint64_t(tensors.size()));
  for (const auto& [name, t] : tensors) {
    write_pod(f, uint32_t(name.size()));
    f.write(name.data(), std::streamsize(name.size()));
    write_pod(f, uint32_t(t.shape().size()));
    for (int d : t.shape()) write_pod(f, int64_t(d));
    auto v = t.values();
    f.write(reinterpret_cast<const char*>(v.data()),
            std::streamsize(v.size() * sizeof(double)));
  }
  if (!f) throw IoError("failed writing checkpoint: " + path);
}

NamedTensors load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  if (read_pod<uint32_t>(f, path) != kCkptMagic)
    throw ParseError("not a checkpoint file: " + path);
  uint32_t version = read_pod<uint32_t>(f, path);
  if (version != kCkptVersion)
    throw ParseError("unsupported checkpoint version " + std::to_string(version) +
                     ": " + path);
  uint64_t count = read_pod<uint64_t>(f, path);
  NamedTensors out;
  out.reserve(size_t(count));
  for (uint64_t i = 0; i < count; ++i) {
    uint32_t name_len = read_pod<uint32_t>(f, path);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    if (!f) throw ParseError("checkpoint truncated: " + path);
    uint32_t rank = read_pod<uint32_t>(f, path);
    Shape shape;
    for (uint32_t d = 0; d < rank; ++d)
      shape.push_back(int(read_pod<int64_t>(f, path)));
    std::vector<double> data(shape_size(shape));
    f.read(reinterpret_cast<char*>(data.data()),
           std::streamsize(data.size() * sizeof(double)));
    if (!f) throw ParseError("checkpoint truncated: " + path);
    out.emplace_back(std::move(name), Tensor::from(std::move(shape), std::move(data)));
  }
  return out;
}

}  // namespace hpaf::nn
