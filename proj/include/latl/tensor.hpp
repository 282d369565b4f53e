#pragma once

// Dense rank<=3 tensors with a reverse-mode tape. Forward ops execute eagerly
// and, while a GradGraph is active and any input requires gradients, push a
// backward closure onto the tape. GradGraph::backward replays the tape in
// reverse. Gradients of leaf tensors (parameters) accumulate across backward
// calls until zero_grads; gradients of op outputs are transient per sweep.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "latl/error.hpp"

namespace latl {

using Mask = std::vector<std::uint8_t>;

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace detail {

template <typename Real>
struct TensorNode {
  Shape shape;
  std::vector<Real> values;
  std::vector<Real> grad;  // allocated on first use
  bool requires_grad = false;
  bool is_leaf = true;

  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), Real(0));
  }
};

}  // namespace detail

template <typename Real>
class GradGraph;

template <typename Real>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return filled(std::move(shape), Real(0), requires_grad);
  }

  static Tensor filled(Shape shape, Real v, bool requires_grad = false) {
    check_shape(shape);
    Tensor t;
    t.node_ = std::make_shared<detail::TensorNode<Real>>();
    t.node_->shape = std::move(shape);
    t.node_->values.assign(shape_numel(t.node_->shape), v);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor from(Shape shape, std::vector<Real> values, bool requires_grad = false) {
    check_shape(shape);
    if (values.size() != shape_numel(shape))
      fail("tensor: " + std::to_string(values.size()) + " values for shape " + shape_str(shape));
    Tensor t;
    t.node_ = std::make_shared<detail::TensorNode<Real>>();
    t.node_->shape = std::move(shape);
    t.node_->values = std::move(values);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor scalar(Real v) { return from({1}, {v}); }

  bool valid() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  std::size_t numel() const { return node_->values.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->is_leaf; }

  const std::vector<Real>& values() const { return node_->values; }
  std::vector<Real>& values_mut() { return node_->values; }

  // Scalar convenience: the single value of a one-element tensor.
  Real value() const {
    if (numel() != 1) fail("value(): tensor " + shape_str(shape()) + " is not scalar");
    return node_->values[0];
  }

  const std::vector<Real>& grad() const {
    node_->ensure_grad();
    return node_->grad;
  }
  std::vector<Real>& grad_mut() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() {
    node_->ensure_grad();
    std::fill(node_->grad.begin(), node_->grad.end(), Real(0));
  }

  std::shared_ptr<detail::TensorNode<Real>> node() const { return node_; }

 private:
  static void check_shape(const Shape& shape) {
    if (shape.empty() || shape.size() > 3) fail("tensor: rank must be 1..3, got " + shape_str(shape));
    for (int d : shape)
      if (d < 1) fail("tensor: non-positive dimension in " + shape_str(shape));
  }

  std::shared_ptr<detail::TensorNode<Real>> node_;
};

// ---------------------------------------------------------------------------
// Tape

namespace detail {
template <typename Real>
inline thread_local GradGraph<Real>* t_active_graph = nullptr;
}

template <typename Real>
class GradGraph {
 public:
  GradGraph() : previous_(detail::t_active_graph<Real>) { detail::t_active_graph<Real> = this; }
  ~GradGraph() { detail::t_active_graph<Real> = previous_; }
  GradGraph(const GradGraph&) = delete;
  GradGraph& operator=(const GradGraph&) = delete;

  static GradGraph* active() { return detail::t_active_graph<Real>; }

  void record(std::shared_ptr<detail::TensorNode<Real>> output, std::function<void()> backward_fn) {
    steps_.push_back({std::move(output), std::move(backward_fn)});
  }

  std::size_t size() const { return steps_.size(); }

  // Reverse sweep. Op outputs get fresh (zeroed) gradient buffers each call,
  // so calling backward twice adds the same leaf contribution twice.
  void backward(const Tensor<Real>& loss) {
    if (loss.numel() != 1) fail("backward: loss " + shape_str(loss.shape()) + " is not scalar");
    for (auto& s : steps_) {
      s.output->ensure_grad();
      std::fill(s.output->grad.begin(), s.output->grad.end(), Real(0));
    }
    auto ln = loss.node();
    ln->ensure_grad();
    ln->grad[0] = Real(1);
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) it->backward_fn();
  }

 private:
  struct Step {
    std::shared_ptr<detail::TensorNode<Real>> output;
    std::function<void()> backward_fn;
  };

  std::vector<Step> steps_;
  GradGraph* previous_;
};

namespace detail {

template <typename Real>
Tensor<Real> make_output(Shape shape, std::vector<Real> values, bool track) {
  auto t = Tensor<Real>::from(std::move(shape), std::move(values));
  if (track) {
    t.node()->requires_grad = true;
    t.node()->is_leaf = false;
  }
  return t;
}

template <typename Real>
bool tracking(std::initializer_list<const Tensor<Real>*> inputs) {
  if (GradGraph<Real>::active() == nullptr) return false;
  for (const auto* t : inputs)
    if ((*t).requires_grad()) return true;
  return false;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Matrix products

template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    fail("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<Real> out(static_cast<std::size_t>(m) * n, Real(0));
  const Real* pa = a.values().data();
  const Real* pb = b.values().data();
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      const Real aip = pa[i * k + p];
      if (aip == Real(0)) continue;
      const Real* brow = pb + p * n;
      Real* orow = out.data() + i * n;
      for (int j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }

  const bool track = detail::tracking<Real>({&a, &b});
  auto result = detail::make_output<Real>({m, n}, std::move(out), track);
  if (track) {
    GradGraph<Real>::active()->record(result.node(), [an = a.node(), bn = b.node(), on = result.node(), m, k, n]() {
      const Real* dc = on->grad.data();
      if (an->requires_grad) {
        an->ensure_grad();
        // dA = dC * B^T
        for (int i = 0; i < m; ++i)
          for (int p = 0; p < k; ++p) {
            Real acc = 0;
            for (int j = 0; j < n; ++j) acc += dc[i * n + j] * bn->values[p * n + j];
            an->grad[i * k + p] += acc;
          }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        // dB = A^T * dC
        for (int p = 0; p < k; ++p)
          for (int i = 0; i < m; ++i) {
            const Real aip = an->values[i * k + p];
            if (aip == Real(0)) continue;
            for (int j = 0; j < n; ++j) bn->grad[p * n + j] += aip * dc[i * n + j];
          }
      }
    });
  }
  return result;
}

// y = A x for rank-2 A and rank-1 x.
template <typename Real>
Tensor<Real> matvec(const Tensor<Real>& a, const Tensor<Real>& x) {
  if (a.rank() != 2 || x.rank() != 1 || a.dim(1) != x.dim(0))
    fail("matvec: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(x.shape()));
  const int m = a.dim(0), k = a.dim(1);
  std::vector<Real> out(static_cast<std::size_t>(m), Real(0));
  for (int i = 0; i < m; ++i) {
    Real acc = 0;
    const Real* arow = a.values().data() + i * k;
    for (int p = 0; p < k; ++p) acc += arow[p] * x.values()[p];
    out[i] = acc;
  }

  const bool track = detail::tracking<Real>({&a, &x});
  auto result = detail::make_output<Real>({m}, std::move(out), track);
  if (track) {
    GradGraph<Real>::active()->record(result.node(), [an = a.node(), xn = x.node(), on = result.node(), m, k]() {
      const Real* dy = on->grad.data();
      if (an->requires_grad) {
        an->ensure_grad();
        for (int i = 0; i < m; ++i)
          for (int p = 0; p < k; ++p) an->grad[i * k + p] += dy[i] * xn->values[p];
      }
      if (xn->requires_grad) {
        xn->ensure_grad();
        for (int i = 0; i < m; ++i) {
          const Real d = dy[i];
          if (d == Real(0)) continue;
          for (int p = 0; p < k; ++p) xn->grad[p] += d * an->values[i * k + p];
        }
      }
    });
  }
  return result;
}

// y = A^T x: weights each row of A by x and sums. Used for attention context.
template <typename Real>
Tensor<Real> vecmat(const Tensor<Real>& x, const Tensor<Real>& a) {
  if (a.rank() != 2 || x.rank() != 1 || a.dim(0) != x.dim(0))
    fail("vecmat: incompatible shapes " + shape_str(x.shape()) + " and " + shape_str(a.shape()));
  const int m = a.dim(0), n = a.dim(1);
  std::vector<Real> out(static_cast<std::size_t>(n), Real(0));
  for (int i = 0; i < m; ++i) {
    const Real xi = x.values()[i];
    if (xi == Real(0)) continue;
    const Real* arow = a.values().data() + i * n;
    for (int j = 0; j < n; ++j) out[j] += xi * arow[j];
  }

  const bool track = detail::tracking<Real>({&x, &a});
  auto result = detail::make_output<Real>({n}, std::move(out), track);
  if (track) {
    GradGraph<Real>::active()->record(result.node(), [xn = x.node(), an = a.node(), on = result.node(), m, n]() {
      const Real* dy = on->grad.data();
      if (xn->requires_grad) {
        xn->ensure_grad();
        for (int i = 0; i < m; ++i) {
          Real acc = 0;
          for (int j = 0; j < n; ++j) acc += an->values[i * n + j] * dy[j];
          xn->grad[i] += acc;
        }
      }
      if (an->requires_grad) {
        an->ensure_grad();
        for (int i = 0; i < m; ++i) {
          const Real xi = xn->values[i];
          if (xi == Real(0)) continue;
          for (int j = 0; j < n; ++j) an->grad[i * n + j] += xi * dy[j];
        }
      }
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// Elementwise ops. Binary ops accept equal shapes, or a rank-1 bias over the
// last axis of a rank-2 left operand.

namespace detail {

enum class BinKind { kSame, kBias };

template <typename Real>
BinKind binary_kind(const Tensor<Real>& a, const Tensor<Real>& b, const char* op) {
  if (a.shape() == b.shape()) return BinKind::kSame;
  if (a.rank() == 2 && b.rank() == 1 && a.dim(1) == b.dim(0)) return BinKind::kBias;
  fail(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
}

}  // namespace detail

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  const auto kind = detail::binary_kind(a, b, "add");
  const std::size_t n = a.numel(), bn_count = b.numel();
  std::vector<Real> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a.values()[i] + b.values()[i % bn_count];

  const bool track = detail::tracking<Real>({&a, &b});
  auto result = detail::make_output<Real>(a.shape(), std::move(out), track);
  if (track) {
    GradGraph<Real>::active()->record(result.node(),
                                      [an = a.node(), bn = b.node(), on = result.node(), kind, n, bn_count]() {
                                        const Real* d = on->grad.data();
                                        if (an->requires_grad) {
                                          an->ensure_grad();
                                          for (std::size_t i = 0; i < n; ++i) an->grad[i] += d[i];
                                        }
                                        if (bn->requires_grad) {
                                          bn->ensure_grad();
                                          if (kind == detail::BinKind::kSame)
                                            for (std::size_t i = 0; i < n; ++i) bn->grad[i] += d[i];
                                          else
                                            for (std::size_t i = 0; i < n; ++i) bn->grad[i % bn_count] += d[i];
                                        }
                                      });
  }
  return result;
}

template <typename Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
  const auto kind = detail::binary_kind(a, b, "sub");
  const std::size_t n = a.numel(), bn_count = b.numel();
  std::vector<Real> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a.values()[i] - b.values()[i % bn_count];

  const bool track = detail::tracking<Real>({&a, &b});
  auto result = detail::make_output<Real>(a.shape(), std::move(out), track);
  if (track) {
    GradGraph<Real>::active()->record(result.node(),
                                      [an = a.node(), bn = b.node(), on = result.node(), kind, n, bn_count]() {
                                        const Real* d = on->grad.data();
                                        if (an->requires_grad) {
                                          an->ensure_grad();
                                          for (std::size_t i = 0; i < n; ++i) an->grad[i] += d[i];
                                        }
                                        if (bn->requires_grad) {
                                          bn->ensure_grad();
                                          if (kind == detail::BinKind::kSame)
                                            for (std::size_t i = 0; i < n; ++i) bn->grad[i] -= d[i];
                                          else
                                            for (std::size_t i = 0; i < n; ++i) bn->grad[i % bn_count] -= d[i];
                                        }
                                      });
  }
  return result;
}

template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  const auto kind = detail::binary_kind(a, b, "mul");
  const std::size_t n = a.numel(), bn_count = b.numel();
  std::vector<Real> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a.values()[i] * b.values()[i % bn_count];

  const bool track = detail::tracking<Real>({&a, &b});
  auto result = detail::make_output<Real>(a.shape(), std::move(out), track);
  if (track) {
    GradGraph<Real>::active()->record(
        result.node(), [an = a.node(), bn = b.node(), on = result.node(), kind, n, bn_count]() {
          const Real* d = on->grad.data();
          if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) an->grad[i] += d[i] * bn->values[i % bn_count];
          }
          if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) bn->grad[i % bn_count] += d[i] * an->values[i];
          }
        });
  }
  return result;
}

namespace detail {

template <typename Real, typename Fwd, typename Dfd>
Tensor<Real> unary_op(const Tensor<Real>& x, Fwd f, Dfd df_from_y) {
  const std::size_t n = x.numel();
  std::vector<Real> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(x.values()[i]);

  const bool track = tracking<Real>({&x});
  auto result = make_output<Real>(x.shape(), std::move(out), track);
  if (track) {
    GradGraph<Real>::active()->record(result.node(), [xn = x.node(), on = result.node(), df_from_y, n]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) xn->grad[i] += on->grad[i] * df_from_y(on->values[i]);
    });
  }
  return result;
}

}  // namespace detail

template <typename Real>
Tensor<Real> tanh_op(const Tensor<Real>& x) {
  return detail::unary_op(
      x, [](Real v) { return std::tanh(v); }, [](Real y) { return Real(1) - y * y; });
}

template <typename Real>
Tensor<Real> sigmoid(const Tensor<Real>& x) {
  return detail::unary_op(
      x,
      [](Real v) {
        if (v >= Real(0)) return Real(1) / (Real(1) + std::exp(-v));
        const Real e = std::exp(v);
        return e / (Real(1) + e);
      },
      [](Real y) { return y * (Real(1) - y); });
}

// c * x for a plain constant c.
template <typename Real>
Tensor<Real> scale(const Tensor<Real>& x, Real c) {
  const std::size_t n = x.numel();
  std::vector<Real> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = c * x.values()[i];

  const bool track = detail::tracking<Real>({&x});
  auto result = detail::make_output<Real>(x.shape(), std::move(out), track);
  if (track) {
    GradGraph<Real>::active()->record(result.node(), [xn = x.node(), on = result.node(), c, n]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) xn->grad[i] += c * on->grad[i];
    });
  }
  return result;
}

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& x) {
  Real acc = 0;
  for (Real v : x.values()) acc += v;

  const bool track = detail::tracking<Real>({&x});
  auto result = detail::make_output<Real>({1}, {acc}, track);
  if (track) {
    GradGraph<Real>::active()->record(result.node(), [xn = x.node(), on = result.node()]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      const Real d = on->grad[0];
      for (auto& g : xn->grad) g += d;
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// Softmax, gathers, reshaping

// Row-wise stabilized softmax. A rank-1 input is treated as a single row.
// mask, when non-empty, is row-major with 1 = keep; masked positions get
// probability exactly 0. Every row must keep at least one position.
template <typename Real>
Tensor<Real> row_softmax(const Tensor<Real>& x, const Mask& mask = {}) {
  if (x.rank() > 2) fail("row_softmax: expected rank 1 or 2, got " + shape_str(x.shape()));
  const int rows = x.rank() == 2 ? x.dim(0) : 1;
  const int cols = x.rank() == 2 ? x.dim(1) : x.dim(0);
  if (!mask.empty() && mask.size() != x.numel())
    fail("row_softmax: mask size " + std::to_string(mask.size()) + " does not match " + shape_str(x.shape()));

  std::vector<Real> out(x.numel());
  for (int r = 0; r < rows; ++r) {
    const Real* xr = x.values().data() + static_cast<std::size_t>(r) * cols;
    Real* yr = out.data() + static_cast<std::size_t>(r) * cols;
    const std::uint8_t* mr = mask.empty() ? nullptr : mask.data() + static_cast<std::size_t>(r) * cols;
    Real mx = -std::numeric_limits<Real>::infinity();
    for (int c = 0; c < cols; ++c)
      if (!mr || mr[c]) mx = std::max(mx, xr[c]);
    if (mx == -std::numeric_limits<Real>::infinity())
      fail("row_softmax: row " + std::to_string(r) + " is fully masked");
    Real denom = 0;
    for (int c = 0; c < cols; ++c) {
      yr[c] = (!mr || mr[c]) ? std::exp(xr[c] - mx) : Real(0);
      denom += yr[c];
    }
    for (int c = 0; c < cols; ++c) yr[c] /= denom;
  }

  const bool track = detail::tracking<Real>({&x});
  auto result = detail::make_output<Real>(x.shape(), std::move(out), track);
  if (track) {
    GradGraph<Real>::active()->record(result.node(), [xn = x.node(), on = result.node(), rows, cols]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      for (int r = 0; r < rows; ++r) {
        const Real* y = on->values.data() + static_cast<std::size_t>(r) * cols;
        const Real* dy = on->grad.data() + static_cast<std::size_t>(r) * cols;
        Real dot = 0;
        for (int c = 0; c < cols; ++c) dot += y[c] * dy[c];
        Real* dx = xn->grad.data() + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) dx[c] += y[c] * (dy[c] - dot);
      }
    });
  }
  return result;
}

// Gather rows of a [V,d] table; backward scatter-adds into the table.
template <typename Real>
Tensor<Real> embedding_lookup(const Tensor<Real>& table, const std::vector<int>& ids) {
  if (table.rank() != 2) fail("embedding_lookup: table must be rank 2, got " + shape_str(table.shape()));
  if (ids.empty()) fail("embedding_lookup: empty id sequence");
  const int v = table.dim(0), d = table.dim(1);
  for (int id : ids)
    if (id < 0 || id >= v)
      fail("embedding_lookup: id " + std::to_string(id) + " out of range [0," + std::to_string(v) + ")");
  const int len = static_cast<int>(ids.size());
  std::vector<Real> out(static_cast<std::size_t>(len) * d);
  for (int i = 0; i < len; ++i)
    std::copy_n(table.values().data() + static_cast<std::size_t>(ids[i]) * d, d,
                out.data() + static_cast<std::size_t>(i) * d);

  const bool track = detail::tracking<Real>({&table});
  auto result = detail::make_output<Real>({len, d}, std::move(out), track);
  if (track) {
    GradGraph<Real>::active()->record(result.node(), [tn = table.node(), on = result.node(), ids, d, len]() {
      if (!tn->requires_grad) return;
      tn->ensure_grad();
      for (int i = 0; i < len; ++i) {
        const Real* src = on->grad.data() + static_cast<std::size_t>(i) * d;
        Real* dst = tn->grad.data() + static_cast<std::size_t>(ids[i]) * d;
        for (int c = 0; c < d; ++c) dst[c] += src[c];
      }
    });
  }
  return result;
}

// Single row of a rank-2 tensor as a rank-1 tensor.
template <typename Real>
Tensor<Real> take_row(const Tensor<Real>& x, int row) {
  if (x.rank() != 2) fail("take_row: expected rank 2, got " + shape_str(x.shape()));
  if (row < 0 || row >= x.dim(0)) fail("take_row: row " + std::to_string(row) + " out of range");
  const int d = x.dim(1);
  std::vector<Real> out(x.values().begin() + static_cast<std::size_t>(row) * d,
                        x.values().begin() + static_cast<std::size_t>(row + 1) * d);

  const bool track = detail::tracking<Real>({&x});
  auto result = detail::make_output<Real>({d}, std::move(out), track);
  if (track) {
    GradGraph<Real>::active()->record(result.node(), [xn = x.node(), on = result.node(), row, d]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      for (int c = 0; c < d; ++c) xn->grad[static_cast<std::size_t>(row) * d + c] += on->grad[c];
    });
  }
  return result;
}

template <typename Real>
Tensor<Real> slice_rows(const Tensor<Real>& x, int start, int count) {
  if (x.rank() != 2) fail("slice_rows: expected rank 2, got " + shape_str(x.shape()));
  if (start < 0 || count < 1 || start + count > x.dim(0))
    fail("slice_rows: range [" + std::to_string(start) + "," + std::to_string(start + count) + ") out of " +
         std::to_string(x.dim(0)) + " rows");
  const int d = x.dim(1);
  std::vector<Real> out(x.values().begin() + static_cast<std::size_t>(start) * d,
                        x.values().begin() + static_cast<std::size_t>(start + count) * d);

  const bool track = detail::tracking<Real>({&x});
  auto result = detail::make_output<Real>({count, d}, std::move(out), track);
  if (track) {
    GradGraph<Real>::active()->record(result.node(), [xn = x.node(), on = result.node(), start, count, d]() {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      for (std::size_t i = 0; i < static_cast<std::size_t>(count) * d; ++i)
        xn->grad[static_cast<std::size_t>(start) * d + i] += on->grad[i];
    });
  }
  return result;
}

// Concatenate along the last axis: two rank-1 tensors, or two rank-2 tensors
// with equal row counts.
template <typename Real>
Tensor<Real> concat_last_axis(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.rank() != b.rank())
    fail("concat_last_axis: rank mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Shape out_shape;
  int rows, ca, cb;
  if (a.rank() == 1) {
    rows = 1;
    ca = a.dim(0);
    cb = b.dim(0);
    out_shape = {ca + cb};
  } else if (a.rank() == 2 && a.dim(0) == b.dim(0)) {
    rows = a.dim(0);
    ca = a.dim(1);
    cb = b.dim(1);
    out_shape = {rows, ca + cb};
  } else {
    fail("concat_last_axis: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  std::vector<Real> out(static_cast<std::size_t>(rows) * (ca + cb));
  for (int r = 0; r < rows; ++r) {
    std::copy_n(a.values().data() + static_cast<std::size_t>(r) * ca, ca,
                out.data() + static_cast<std::size_t>(r) * (ca + cb));
    std::copy_n(b.values().data() + static_cast<std::size_t>(r) * cb, cb,
                out.data() + static_cast<std::size_t>(r) * (ca + cb) + ca);
  }

  const bool track = detail::tracking<Real>({&a, &b});
  auto result = detail::make_output<Real>(std::move(out_shape), std::move(out), track);
  if (track) {
    GradGraph<Real>::active()->record(result.node(),
                                      [an = a.node(), bn = b.node(), on = result.node(), rows, ca, cb]() {
                                        for (int r = 0; r < rows; ++r) {
                                          const Real* d = on->grad.data() + static_cast<std::size_t>(r) * (ca + cb);
                                          if (an->requires_grad) {
                                            an->ensure_grad();
                                            for (int c = 0; c < ca; ++c)
                                              an->grad[static_cast<std::size_t>(r) * ca + c] += d[c];
                                          }
                                          if (bn->requires_grad) {
                                            bn->ensure_grad();
                                            for (int c = 0; c < cb; ++c)
                                              bn->grad[static_cast<std::size_t>(r) * cb + c] += d[ca + c];
                                          }
                                        }
                                      });
  }
  return result;
}

// Stack rank-1 tensors of equal length into a rank-2 tensor.
template <typename Real>
Tensor<Real> stack_rows(const std::vector<Tensor<Real>>& rows) {
  if (rows.empty()) fail("stack_rows: no rows");
  const int d = rows.front().dim(0);
  for (const auto& r : rows)
    if (r.rank() != 1 || r.dim(0) != d) fail("stack_rows: row shape mismatch at " + shape_str(r.shape()));
  const int m = static_cast<int>(rows.size());
  std::vector<Real> out(static_cast<std::size_t>(m) * d);
  for (int i = 0; i < m; ++i)
    std::copy_n(rows[static_cast<std::size_t>(i)].values().data(), d, out.data() + static_cast<std::size_t>(i) * d);

  bool track = GradGraph<Real>::active() != nullptr;
  if (track) {
    bool any = false;
    for (const auto& r : rows) any = any || r.requires_grad();
    track = any;
  }
  auto result = detail::make_output<Real>({m, d}, std::move(out), track);
  if (track) {
    std::vector<std::shared_ptr<detail::TensorNode<Real>>> nodes;
    nodes.reserve(rows.size());
    for (const auto& r : rows) nodes.push_back(r.node());
    GradGraph<Real>::active()->record(result.node(), [nodes = std::move(nodes), on = result.node(), d]() {
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (!nodes[i]->requires_grad) continue;
        nodes[i]->ensure_grad();
        const Real* src = on->grad.data() + i * d;
        for (int c = 0; c < d; ++c) nodes[i]->grad[c] += src[c];
      }
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// Loss

// Mean over unmasked positions of -log softmax(logits)[t, target_t].
// mask entries are 1 = predict this position.
template <typename Real>
Tensor<Real> masked_cross_entropy(const Tensor<Real>& logits, const std::vector<int>& targets, const Mask& mask) {
  if (logits.rank() != 2) fail("masked_cross_entropy: logits must be rank 2, got " + shape_str(logits.shape()));
  const int t_len = logits.dim(0), v = logits.dim(1);
  if (static_cast<int>(targets.size()) != t_len || static_cast<int>(mask.size()) != t_len)
    fail("masked_cross_entropy: " + std::to_string(t_len) + " rows vs " + std::to_string(targets.size()) +
         " targets, " + std::to_string(mask.size()) + " mask entries");
  int active = 0;
  for (int t = 0; t < t_len; ++t) {
    if (!mask[static_cast<std::size_t>(t)]) continue;
    ++active;
    if (targets[static_cast<std::size_t>(t)] < 0 || targets[static_cast<std::size_t>(t)] >= v)
      fail("masked_cross_entropy: target " + std::to_string(targets[static_cast<std::size_t>(t)]) +
           " out of range [0," + std::to_string(v) + ")");
  }
  if (active == 0) fail("masked_cross_entropy: all positions masked");

  // Keep the probabilities around for the backward pass.
  std::vector<Real> probs(static_cast<std::size_t>(t_len) * v, Real(0));
  Real total = 0;
  for (int t = 0; t < t_len; ++t) {
    if (!mask[static_cast<std::size_t>(t)]) continue;
    const Real* row = logits.values().data() + static_cast<std::size_t>(t) * v;
    Real mx = row[0];
    for (int c = 1; c < v; ++c) mx = std::max(mx, row[c]);
    Real denom = 0;
    Real* prow = probs.data() + static_cast<std::size_t>(t) * v;
    for (int c = 0; c < v; ++c) {
      prow[c] = std::exp(row[c] - mx);
      denom += prow[c];
    }
    for (int c = 0; c < v; ++c) prow[c] /= denom;
    total += -(row[targets[static_cast<std::size_t>(t)]] - mx - std::log(denom));
  }
  const Real loss = total / Real(active);

  const bool track = detail::tracking<Real>({&logits});
  auto result = detail::make_output<Real>({1}, {loss}, track);
  if (track) {
    GradGraph<Real>::active()->record(
        result.node(),
        [ln = logits.node(), on = result.node(), probs = std::move(probs), targets, mask, t_len, v, active]() {
          if (!ln->requires_grad) return;
          ln->ensure_grad();
          const Real d = on->grad[0] / Real(active);
          for (int t = 0; t < t_len; ++t) {
            if (!mask[static_cast<std::size_t>(t)]) continue;
            const Real* prow = probs.data() + static_cast<std::size_t>(t) * v;
            Real* grow = ln->grad.data() + static_cast<std::size_t>(t) * v;
            for (int c = 0; c < v; ++c) grow[c] += d * prow[c];
            grow[targets[static_cast<std::size_t>(t)]] -= d;
          }
        });
  }
  return result;
}

}  // namespace latl
