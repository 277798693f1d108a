#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qubolab/qubo.hpp"
#include "qubolab/rng.hpp"

/// Minimal dense 2-D tensors with tape-based reverse-mode differentiation.
/// Only the operations the BPGNN forward pass needs are provided.
namespace qubolab::nn {

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

namespace detail {

struct Node {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first needed
  bool requires_grad = false;

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

}  // namespace detail

/// Shared handle to a row-major matrix of doubles. Copies alias the same storage.
class Tensor {
 public:
  Tensor() = default;

  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0, bool requires_grad = false)
      : n_(std::make_shared<detail::Node>()) {
    n_->rows = rows;
    n_->cols = cols;
    n_->data.assign(rows * cols, fill);
    n_->requires_grad = requires_grad;
  }

  static Tensor from(std::size_t rows, std::size_t cols, std::vector<double> data, bool requires_grad = false) {
    if (data.size() != rows * cols) {
      throw ShapeError("Tensor: data length " + std::to_string(data.size()) + " does not match shape " +
                       std::to_string(rows) + "x" + std::to_string(cols));
    }
    Tensor t;
    t.n_ = std::make_shared<detail::Node>();
    t.n_->rows = rows;
    t.n_->cols = cols;
    t.n_->data = std::move(data);
    t.n_->requires_grad = requires_grad;
    return t;
  }

  static Tensor identity(std::size_t n) {
    Tensor t(n, n);
    for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
  }

  bool defined() const noexcept { return static_cast<bool>(n_); }
  std::size_t rows() const { return n_->rows; }
  std::size_t cols() const { return n_->cols; }
  std::size_t numel() const { return n_->data.size(); }
  std::vector<std::size_t> shape() const { return {n_->rows, n_->cols}; }

  std::span<double> data() { return n_->data; }
  std::span<const double> data() const { return n_->data; }
  double& at(std::size_t i, std::size_t j) { return n_->data[i * n_->cols + j]; }
  double at(std::size_t i, std::size_t j) const { return n_->data[i * n_->cols + j]; }
  double item() const {
    if (numel() != 1) throw ShapeError("Tensor::item on a non-scalar");
    return n_->data[0];
  }

  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool on) { n_->requires_grad = on; }
  bool has_grad() const { return !n_->grad.empty(); }
  std::span<double> grad() { return n_->ensure_grad(); }
  std::span<const double> grad() const { return n_->ensure_grad(); }
  void zero_grad() { std::fill(n_->grad.begin(), n_->grad.end(), 0.0); }

  Tensor clone() const { return from(rows(), cols(), n_->data, n_->requires_grad); }
  bool same_storage(const Tensor& o) const noexcept { return n_ == o.n_; }

  const std::shared_ptr<detail::Node>& node() const { return n_; }

 private:
  std::shared_ptr<detail::Node> n_;
};

/// Records differentiable operations in execution order; backward() replays
/// them once in reverse. Gradients accumulate into leaf tensors that have
/// requires_grad set. A sparse matrix passed to spmm must outlive backward().
class Tape {
 public:
  std::size_t size() const noexcept { return records_.size(); }

  void reset() {
    records_.clear();
    consumed_ = false;
  }

  // Inference mode: operations compute values but record nothing.
  void set_grad_enabled(bool on) noexcept { grad_enabled_ = on; }
  bool grad_enabled() const noexcept { return grad_enabled_; }

  void backward(const Tensor& loss) {
    if (consumed_) throw std::logic_error("Tape::backward called twice without reset()");
    if (loss.numel() != 1) throw ShapeError("Tape::backward: loss must be a scalar");
    if (!loss.requires_grad()) throw std::logic_error("Tape::backward: loss is not on the tape");
    loss.node()->ensure_grad()[0] += 1.0;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) it->backward();
    consumed_ = true;
  }

  // -- linear algebra -------------------------------------------------------

  Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) {
      throw ShapeError("matmul: " + dims(a) + " x " + dims(b));
    }
    Tensor out(a.rows(), b.cols());
    detail::MapMat(out.data().data(), a.rows(), b.cols()).noalias() =
        cmap(a) * cmap(b);
    auto an = a.node(), bn = b.node(), on = out.node();
    record(out, {a, b}, [an, bn, on] {
      detail::ConstMapMat g(on->grad.data(), on->rows, on->cols);
      if (an->requires_grad) {
        detail::MapMat(an->ensure_grad().data(), an->rows, an->cols).noalias() +=
            g * detail::ConstMapMat(bn->data.data(), bn->rows, bn->cols).transpose();
      }
      if (bn->requires_grad) {
        detail::MapMat(bn->ensure_grad().data(), bn->rows, bn->cols).noalias() +=
            detail::ConstMapMat(an->data.data(), an->rows, an->cols).transpose() * g;
      }
    });
    return out;
  }

  /// M X for a sparse k x k matrix M. When X has B*k rows it is treated as B
  /// stacked k-row blocks and M is applied to each block.
  Tensor spmm(const CsrMatrix& m, const Tensor& x) {
    if (m.rows != m.cols || m.rows == 0 || x.rows() % m.rows != 0) {
      throw ShapeError("spmm: matrix " + std::to_string(m.rows) + "x" + std::to_string(m.cols) +
                       " incompatible with " + dims(x));
    }
    const std::size_t k = m.rows, d = x.cols(), blocks = x.rows() / k;
    Tensor out(x.rows(), d);
    const double* xs = x.data().data();
    double* ys = out.data().data();
    for (std::size_t blk = 0; blk < blocks; ++blk) {
      const std::size_t off = blk * k;
      for (std::size_t i = 0; i < k; ++i) {
        double* yi = ys + (off + i) * d;
        for (std::size_t p = m.row_ptr[i]; p < m.row_ptr[i + 1]; ++p) {
          const double v = m.val[p];
          const double* xj = xs + (off + m.col[p]) * d;
          for (std::size_t c = 0; c < d; ++c) yi[c] += v * xj[c];
        }
      }
    }
    auto xn = x.node(), on = out.node();
    const CsrMatrix* mp = &m;
    record(out, {x}, [xn, on, mp, k, d, blocks] {
      if (!xn->requires_grad) return;
      auto& gx = xn->ensure_grad();
      const auto& gy = on->grad;
      for (std::size_t blk = 0; blk < blocks; ++blk) {
        const std::size_t off = blk * k;
        for (std::size_t i = 0; i < k; ++i) {
          const double* gyi = gy.data() + (off + i) * d;
          for (std::size_t p = mp->row_ptr[i]; p < mp->row_ptr[i + 1]; ++p) {
            const double v = mp->val[p];
            double* gxj = gx.data() + (off + mp->col[p]) * d;
            for (std::size_t c = 0; c < d; ++c) gxj[c] += v * gyi[c];
          }
        }
      }
    });
    return out;
  }

  // -- elementwise ----------------------------------------------------------

  Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, "add", 1.0); }
  Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, "sub", -1.0); }

  Tensor hadamard(const Tensor& a, const Tensor& b) {
    same_shape(a, b, "hadamard");
    Tensor out(a.rows(), a.cols());
    auto o = out.data();
    auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
    auto an = a.node(), bn = b.node(), on = out.node();
    record(out, {a, b}, [an, bn, on] {
      const auto& g = on->grad;
      if (an->requires_grad) {
        auto& ga = an->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bn->data[i];
      }
      if (bn->requires_grad) {
        auto& gb = bn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * an->data[i];
      }
    });
    return out;
  }

  Tensor scale(const Tensor& a, double s) {
    Tensor out(a.rows(), a.cols());
    auto o = out.data();
    auto x = a.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = s * x[i];
    auto an = a.node(), on = out.node();
    record(out, {a}, [an, on, s] {
      if (!an->requires_grad) return;
      auto& ga = an->ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += s * on->grad[i];
    });
    return out;
  }

  /// a (R x d) + v (R x 1) broadcast across columns.
  Tensor broadcast_add_col(const Tensor& a, const Tensor& v) {
    if (v.cols() != 1 || v.rows() != a.rows()) throw ShapeError("broadcast_add_col: " + dims(a) + " + " + dims(v));
    const std::size_t d = a.cols();
    Tensor out(a.rows(), d);
    for (std::size_t r = 0; r < a.rows(); ++r) {
      for (std::size_t c = 0; c < d; ++c) out.at(r, c) = a.at(r, c) + v.data()[r];
    }
    auto an = a.node(), vn = v.node(), on = out.node();
    record(out, {a, v}, [an, vn, on, d] {
      const auto& g = on->grad;
      if (an->requires_grad) {
        auto& ga = an->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (vn->requires_grad) {
        auto& gv = vn->ensure_grad();
        for (std::size_t r = 0; r < gv.size(); ++r) {
          double s = 0.0;
          for (std::size_t c = 0; c < d; ++c) s += g[r * d + c];
          gv[r] += s;
        }
      }
    });
    return out;
  }

  /// a (R x d) + r (1 x d) broadcast across rows (bias add).
  Tensor add_row(const Tensor& a, const Tensor& r) { return row_op(a, r, false); }

  /// a (R x d) scaled column-wise by r (1 x d).
  Tensor mul_row(const Tensor& a, const Tensor& r) { return row_op(a, r, true); }

  Tensor relu(const Tensor& a) {
    return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
                 [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
  }

  Tensor tanh(const Tensor& a) {
    return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
  }

  /// Sign-preserving log compression.
  Tensor asinh(const Tensor& a) {
    return unary(a, [](double x) { return std::asinh(x); }, [](double x, double) { return 1.0 / std::sqrt(1.0 + x * x); });
  }

  Tensor sigmoid(const Tensor& a) {
    return unary(a, sigmoid_scalar, [](double, double y) { return y * (1.0 - y); });
  }

  Tensor softplus(const Tensor& a) {
    return unary(a, [](double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
                 [](double x, double) { return sigmoid_scalar(x); });
  }

  /// Inverted dropout. Masks are a pure function of (seed, element index).
  Tensor dropout(const Tensor& a, double p, bool train, std::uint64_t seed) {
    if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout: p must be in [0, 1)");
    if (!train || p == 0.0) return a;
    const double keep = 1.0 / (1.0 - p);
    std::vector<double> mask(a.numel());
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = hash_uniform(seed, i) < p ? 0.0 : keep;
    Tensor out(a.rows(), a.cols());
    auto o = out.data();
    auto x = a.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * mask[i];
    auto an = a.node(), on = out.node();
    record(out, {a}, [an, on, mask = std::move(mask)] {
      if (!an->requires_grad) return;
      auto& ga = an->ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += on->grad[i] * mask[i];
    });
    return out;
  }

  // -- reductions -----------------------------------------------------------

  Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double x : a.data()) s += x;
    Tensor out = Tensor::from(1, 1, {s});
    auto an = a.node(), on = out.node();
    record(out, {a}, [an, on] {
      if (!an->requires_grad) return;
      auto& ga = an->ensure_grad();
      for (auto& g : ga) g += on->grad[0];
    });
    return out;
  }

  /// Mean over elements of the binary cross-entropy between sigmoid(logits)
  /// and targets, in the stable form max(z,0) - z*y + log(1 + exp(-|z|)).
  Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
    same_shape(logits, targets, "bce_with_logits");
    const auto z = logits.data();
    const auto y = targets.data();
    const double n = static_cast<double>(z.size());
    double s = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      s += std::max(z[i], 0.0) - z[i] * y[i] + std::log1p(std::exp(-std::abs(z[i])));
    }
    Tensor out = Tensor::from(1, 1, {s / n});
    auto zn = logits.node(), yn = targets.node(), on = out.node();
    record(out, {logits, targets}, [zn, yn, on, n] {
      const double g = on->grad[0] / n;
      if (zn->requires_grad) {
        auto& gz = zn->ensure_grad();
        for (std::size_t i = 0; i < gz.size(); ++i) gz[i] += g * (sigmoid_scalar(zn->data[i]) - yn->data[i]);
      }
      if (yn->requires_grad) {
        auto& gy = yn->ensure_grad();
        for (std::size_t i = 0; i < gy.size(); ++i) gy[i] -= g * zn->data[i];
      }
    });
    return out;
  }

  static double sigmoid_scalar(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  }

 private:
  struct Record {
    std::function<void()> backward;
  };
  std::vector<Record> records_;
  bool consumed_ = false;
  bool grad_enabled_ = true;

  static std::string dims(const Tensor& t) { return std::to_string(t.rows()) + "x" + std::to_string(t.cols()); }

  static detail::ConstMapMat cmap(const Tensor& t) {
    return detail::ConstMapMat(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                               static_cast<Eigen::Index>(t.cols()));
  }

  static void same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
      throw ShapeError(std::string(op) + ": shape mismatch " + dims(a) + " vs " + dims(b));
    }
  }

  template <class Fn>
  void record(Tensor& out, std::initializer_list<Tensor> inputs, Fn&& fn) {
    if (!grad_enabled_) return;
    bool any = false;
    for (const auto& t : inputs) any = any || t.requires_grad();
    if (!any) return;
    if (consumed_) throw std::logic_error("Tape: recording after backward() without reset()");
    out.set_requires_grad(true);
    out.node()->ensure_grad();
    records_.push_back({std::forward<Fn>(fn)});
  }

  Tensor binary(const Tensor& a, const Tensor& b, const char* op, double sb) {
    same_shape(a, b, op);
    Tensor out(a.rows(), a.cols());
    auto o = out.data();
    auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + sb * y[i];
    auto an = a.node(), bn = b.node(), on = out.node();
    record(out, {a, b}, [an, bn, on, sb] {
      const auto& g = on->grad;
      if (an->requires_grad) {
        auto& ga = an->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (bn->requires_grad) {
        auto& gb = bn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += sb * g[i];
      }
    });
    return out;
  }

  Tensor row_op(const Tensor& a, const Tensor& r, bool multiply) {
    if (r.rows() != 1 || r.cols() != a.cols()) {
      throw ShapeError(std::string(multiply ? "mul_row" : "add_row") + ": " + dims(a) + " with " + dims(r));
    }
    const std::size_t d = a.cols();
    Tensor out(a.rows(), d);
    auto o = out.data();
    auto x = a.data();
    auto rv = r.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = multiply ? x[i] * rv[i % d] : x[i] + rv[i % d];
    auto an = a.node(), rn = r.node(), on = out.node();
    record(out, {a, r}, [an, rn, on, d, multiply] {
      const auto& g = on->grad;
      if (an->requires_grad) {
        auto& ga = an->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += multiply ? g[i] * rn->data[i % d] : g[i];
      }
      if (rn->requires_grad) {
        auto& gr = rn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gr[i % d] += multiply ? g[i] * an->data[i] : g[i];
      }
    });
    return out;
  }

  /// fn(x) forward; dfn(x, y) is dy/dx given input x and output y.
  template <class F, class D>
  Tensor unary(const Tensor& a, F fn, D dfn) {
    Tensor out(a.rows(), a.cols());
    auto o = out.data();
    auto x = a.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = fn(x[i]);
    auto an = a.node(), on = out.node();
    record(out, {a}, [an, on, dfn] {
      if (!an->requires_grad) return;
      auto& ga = an->ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += on->grad[i] * dfn(an->data[i], on->data[i]);
    });
    return out;
  }
};

// ---------------------------------------------------------------------------
// Adam

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // added to the gradient as weight_decay * param
};

struct AdamState {
  AdamOptions options;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update of every tensor in `params` from its
/// accumulated gradient. Moment buffers are created on the first call.
inline void adam_step(std::span<Tensor> params, AdamState& state) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.numel(), 0.0);
      state.v.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam_step: parameter count changed");
  const auto& o = state.options;
  ++state.step;
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& p = params[t];
    if (state.m[t].size() != p.numel()) throw ShapeError("adam_step: moment shape mismatch");
    auto w = p.data();
    auto g = p.grad();
    auto& m = state.m[t];
    auto& v = state.v[t];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] + o.weight_decay * w[i];
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * gi;
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * gi * gi;
      w[i] -= o.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + o.eps);
    }
  }
}

}  // namespace qubolab::nn
