#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tlsrec/error.hpp"
#include "tlsrec/rng.hpp"

namespace tlsrec {

/// Dense tensor of 64-bit reals, row-major, 1 to 3 axes.
/// `grad` is allocated (same shape) iff `requires_grad` is set.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;
  bool requires_grad = false;
  std::vector<double> grad;

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
    check_axes();
    values.assign(element_count(shape), 0.0);
  }

  Tensor(std::vector<std::size_t> s, std::vector<double> v)
      : shape(std::move(s)), values(std::move(v)) {
    check_axes();
    if (values.size() != element_count(shape))
      throw DimensionError("tensor: " + std::to_string(values.size()) +
                           " values for shape " + shape_string(shape));
  }

  static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }

  static Tensor full(std::vector<std::size_t> s, double fill) {
    Tensor t(std::move(s));
    std::fill(t.values.begin(), t.values.end(), fill);
    return t;
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  static std::size_t element_count(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
  }

  static std::string shape_string(const std::vector<std::size_t>& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? " x " : "") << s[i];
    os << "]";
    return os.str();
  }

  std::size_t size() const { return values.size(); }
  std::size_t ndim() const { return shape.size(); }
  std::size_t rows() const { return shape.at(0); }
  std::size_t cols() const { return shape.size() > 1 ? shape[1] : 1; }

  double& at(std::size_t i) { return values[i]; }
  double at(std::size_t i) const { return values[i]; }
  double& at(std::size_t i, std::size_t j) { return values[i * shape[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return values[i * shape[1] + j]; }

  void set_requires_grad(bool on) {
    requires_grad = on;
    if (on)
      grad.assign(values.size(), 0.0);
    else
      grad.clear();
  }

  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }

 private:
  void check_axes() const {
    if (shape.empty() || shape.size() > 3)
      throw DimensionError("tensor: rank must be 1..3, got " + shape_string(shape));
    for (std::size_t d : shape)
      if (d == 0) throw DimensionError("tensor: zero-length axis in " + shape_string(shape));
  }
};

using TensorPtr = std::shared_ptr<Tensor>;

inline TensorPtr make_tensor(Tensor t) { return std::make_shared<Tensor>(std::move(t)); }

/// Fresh leaf that participates in gradient propagation.
inline TensorPtr make_parameter(Tensor t) {
  auto p = make_tensor(std::move(t));
  p->set_requires_grad(true);
  return p;
}

/// Boolean mask over a rows x cols score matrix; `true` excludes the entry.
struct BoolMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> excluded;

  BoolMask(std::size_t r, std::size_t c) : rows(r), cols(c), excluded(r * c, 0) {}

  bool is_excluded(std::size_t r, std::size_t c) const { return excluded[r * cols + c] != 0; }
  void exclude(std::size_t r, std::size_t c) { excluded[r * cols + c] = 1; }

  /// Causal mask: query position i may attend only to positions j <= i.
  static BoolMask causal(std::size_t n) {
    BoolMask m(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) m.exclude(i, j);
    return m;
  }
};

/// Reverse-mode tape. Each forward primitive that touches a tensor with
/// requires_grad appends one record holding the handles and saved state its
/// local gradient needs. backward() replays records newest-first, so every
/// node is visited exactly once and each output's gradient is complete
/// before its producer runs.
///
/// A tape is confined to a single training worker and never shared.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  void record(BackwardFn fn) { records_.push_back(std::move(fn)); }

  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  void clear() { records_.clear(); }

  /// Seeds d(loss)/d(loss) = 1 and propagates to every reachable leaf.
  /// The tape is cleared afterwards.
  void backward(const TensorPtr& loss) {
    if (!loss || loss->size() != 1)
      throw ContractError("backward: loss must be a scalar tensor");
    if (!loss->requires_grad)
      throw ContractError("backward: loss was not produced through taped primitives");
    loss->grad.assign(1, 1.0);
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
    clear();
  }

 private:
  std::vector<BackwardFn> records_;
};

namespace detail {

inline bool wants_grad(const Tape* tape, std::initializer_list<const TensorPtr*> inputs) {
  if (!tape) return false;
  for (const TensorPtr* t : inputs)
    if ((*t)->requires_grad) return true;
  return false;
}

inline void accumulate(Tensor& t, std::size_t i, double v) {
  if (t.requires_grad) t.grad[i] += v;
}

// Views a 1-D or 2-D tensor as a (rows x cols) matrix for matmul purposes.
struct MatView {
  std::size_t rows, cols;
  bool vector;
};

inline MatView as_left(const Tensor& t) {
  if (t.ndim() == 1) return {1, t.shape[0], true};        // row vector
  if (t.ndim() == 2) return {t.shape[0], t.shape[1], false};
  throw DimensionError("matmul: operands must have 1 or 2 axes, got " +
                       Tensor::shape_string(t.shape));
}

inline MatView as_right(const Tensor& t) {
  if (t.ndim() == 1) return {t.shape[0], 1, true};        // column vector
  if (t.ndim() == 2) return {t.shape[0], t.shape[1], false};
  throw DimensionError("matmul: operands must have 1 or 2 axes, got " +
                       Tensor::shape_string(t.shape));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Forward primitives. Each records itself when `tape` is non-null and an
// input requires grad; with a null tape they are plain math, safe for
// concurrent evaluation.
// ---------------------------------------------------------------------------

/// Matrix product. 1-D operands act as a row vector on the left and a column
/// vector on the right, so vec.vec is a scalar [1], mat.vec a vector.
inline TensorPtr matmul(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
  const auto va = detail::as_left(*a);
  const auto vb = detail::as_right(*b);
  if (va.cols != vb.rows)
    throw DimensionError("matmul: inner dimensions disagree: " +
                         Tensor::shape_string(a->shape) + " vs " +
                         Tensor::shape_string(b->shape));
  const std::size_t r = va.rows, k = va.cols, c = vb.cols;

  std::vector<std::size_t> out_shape;
  if (va.vector && vb.vector)
    out_shape = {1};
  else if (va.vector)
    out_shape = {c};
  else if (vb.vector)
    out_shape = {r};
  else
    out_shape = {r, c};

  Tensor out(out_shape);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      double acc = 0.0;
      for (std::size_t l = 0; l < k; ++l) acc += a->values[i * k + l] * b->values[l * c + j];
      out.values[i * c + j] = acc;
    }

  auto result = make_tensor(std::move(out));
  if (detail::wants_grad(tape, {&a, &b})) {
    result->set_requires_grad(true);
    tape->record([a, b, result, r, k, c]() {
      const auto& g = result->grad;
      if (a->requires_grad)
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t l = 0; l < k; ++l) {
            double acc = 0.0;
            for (std::size_t j = 0; j < c; ++j) acc += g[i * c + j] * b->values[l * c + j];
            a->grad[i * k + l] += acc;
          }
      if (b->requires_grad)
        for (std::size_t l = 0; l < k; ++l)
          for (std::size_t j = 0; j < c; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < r; ++i) acc += a->values[i * k + l] * g[i * c + j];
            b->grad[l * c + j] += acc;
          }
    });
  }
  return result;
}

/// 2-D transpose.
inline TensorPtr transpose(Tape* tape, const TensorPtr& x) {
  if (x->ndim() != 2)
    throw DimensionError("transpose: expected 2 axes, got " + Tensor::shape_string(x->shape));
  const std::size_t r = x->shape[0], c = x->shape[1];
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.values[j * r + i] = x->values[i * c + j];
  auto result = make_tensor(std::move(out));
  if (detail::wants_grad(tape, {&x})) {
    result->set_requires_grad(true);
    tape->record([x, result, r, c]() {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) x->grad[i * c + j] += result->grad[j * r + i];
    });
  }
  return result;
}

namespace detail {

template <class Fwd, class Bwd>
TensorPtr unary_op(Tape* tape, const TensorPtr& x, Fwd fwd, Bwd bwd) {
  Tensor out(x->shape);
  for (std::size_t i = 0; i < x->size(); ++i) out.values[i] = fwd(x->values[i]);
  auto result = make_tensor(std::move(out));
  if (wants_grad(tape, {&x})) {
    result->set_requires_grad(true);
    tape->record([x, result, bwd]() {
      for (std::size_t i = 0; i < x->size(); ++i)
        x->grad[i] += result->grad[i] * bwd(x->values[i], result->values[i]);
    });
  }
  return result;
}

}  // namespace detail

/// Elementwise sum; shapes must match exactly.
inline TensorPtr add(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
  if (!a->same_shape(*b))
    throw DimensionError("add: shapes disagree: " + Tensor::shape_string(a->shape) + " vs " +
                         Tensor::shape_string(b->shape));
  Tensor out(a->shape);
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = a->values[i] + b->values[i];
  auto result = make_tensor(std::move(out));
  if (detail::wants_grad(tape, {&a, &b})) {
    result->set_requires_grad(true);
    tape->record([a, b, result]() {
      for (std::size_t i = 0; i < result->size(); ++i) {
        detail::accumulate(*a, i, result->grad[i]);
        detail::accumulate(*b, i, result->grad[i]);
      }
    });
  }
  return result;
}

/// Hadamard product; shapes must match exactly.
inline TensorPtr mul(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
  if (!a->same_shape(*b))
    throw DimensionError("mul: shapes disagree: " + Tensor::shape_string(a->shape) + " vs " +
                         Tensor::shape_string(b->shape));
  Tensor out(a->shape);
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = a->values[i] * b->values[i];
  auto result = make_tensor(std::move(out));
  if (detail::wants_grad(tape, {&a, &b})) {
    result->set_requires_grad(true);
    tape->record([a, b, result]() {
      for (std::size_t i = 0; i < result->size(); ++i) {
        detail::accumulate(*a, i, result->grad[i] * b->values[i]);
        detail::accumulate(*b, i, result->grad[i] * a->values[i]);
      }
    });
  }
  return result;
}

inline TensorPtr relu(Tape* tape, const TensorPtr& x) {
  return detail::unary_op(
      tape, x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline TensorPtr sigmoid(Tape* tape, const TensorPtr& x) {
  return detail::unary_op(
      tape, x,
      [](double v) { return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                                     : std::exp(v) / (1.0 + std::exp(v)); },
      [](double, double y) { return y * (1.0 - y); });
}

inline TensorPtr log(Tape* tape, const TensorPtr& x) {
  return detail::unary_op(
      tape, x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

inline TensorPtr scale(Tape* tape, const TensorPtr& x, double c) {
  return detail::unary_op(
      tape, x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

inline TensorPtr add_scalar(Tape* tape, const TensorPtr& x, double c) {
  return detail::unary_op(
      tape, x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

/// Row-wise softmax over the key axis. Masked-out entries are excluded from
/// both the max-shift and the normalization, so they receive exactly zero
/// weight and do not perturb the surviving columns. A 1-D input is one row.
inline TensorPtr softmax_over_keys(Tape* tape, const TensorPtr& scores,
                                   const BoolMask* mask = nullptr) {
  const std::size_t r = scores->ndim() == 2 ? scores->shape[0] : 1;
  const std::size_t c = scores->ndim() == 2 ? scores->shape[1] : scores->shape[0];
  if (scores->ndim() > 2)
    throw DimensionError("softmax_over_keys: expected 1 or 2 axes, got " +
                         Tensor::shape_string(scores->shape));
  if (mask && (mask->rows != r || mask->cols != c))
    throw DimensionError("softmax_over_keys: mask is " + std::to_string(mask->rows) + "x" +
                         std::to_string(mask->cols) + " for scores " +
                         Tensor::shape_string(scores->shape));

  Tensor out(scores->shape);
  for (std::size_t i = 0; i < r; ++i) {
    double maxv = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j)
      if (!mask || !mask->is_excluded(i, j)) maxv = std::max(maxv, scores->values[i * c + j]);
    if (!std::isfinite(maxv))
      throw InvalidMaskError("softmax_over_keys: row " + std::to_string(i) +
                             " has every entry masked");
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      if (mask && mask->is_excluded(i, j)) {
        out.values[i * c + j] = 0.0;
      } else {
        const double e = std::exp(scores->values[i * c + j] - maxv);
        out.values[i * c + j] = e;
        denom += e;
      }
    }
    for (std::size_t j = 0; j < c; ++j)
      if (!mask || !mask->is_excluded(i, j)) out.values[i * c + j] /= denom;
  }

  auto result = make_tensor(std::move(out));
  if (detail::wants_grad(tape, {&scores})) {
    result->set_requires_grad(true);
    // The closure owns a copy of the mask, so the caller's mask may be a
    // temporary that dies before backward runs.
    auto m = mask ? std::make_shared<BoolMask>(*mask) : std::shared_ptr<BoolMask>();
    tape->record([scores, result, m, r, c]() {
      for (std::size_t i = 0; i < r; ++i) {
        double inner = 0.0;
        for (std::size_t j = 0; j < c; ++j)
          inner += result->grad[i * c + j] * result->values[i * c + j];
        for (std::size_t j = 0; j < c; ++j) {
          if (m && m->is_excluded(i, j)) continue;
          const double y = result->values[i * c + j];
          scores->grad[i * c + j] += y * (result->grad[i * c + j] - inner);
        }
      }
    });
  }
  return result;
}

/// alpha (x - mean) / sqrt(var + eps) + beta. A 2-D input is normalized one
/// column at a time (each column is an embedding); alpha and beta must have
/// the column length. Variance is the population variance.
inline TensorPtr layer_norm(Tape* tape, const TensorPtr& x, const TensorPtr& alpha,
                            const TensorPtr& beta, double epsilon) {
  if (epsilon <= 0.0) throw ContractError("layer_norm: epsilon must be > 0");
  const std::size_t d = x->shape[0];
  const std::size_t n = x->ndim() == 2 ? x->shape[1] : 1;
  if (x->ndim() > 2)
    throw DimensionError("layer_norm: expected 1 or 2 axes, got " +
                         Tensor::shape_string(x->shape));
  if (alpha->shape != std::vector<std::size_t>{d} || beta->shape != std::vector<std::size_t>{d})
    throw DimensionError("layer_norm: alpha/beta must be length " + std::to_string(d));

  Tensor out(x->shape);
  std::vector<double> inv_sd(n), mean(n);
  for (std::size_t j = 0; j < n; ++j) {
    double mu = 0.0;
    for (std::size_t i = 0; i < d; ++i) mu += x->values[i * n + j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double c = x->values[i * n + j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    mean[j] = mu;
    inv_sd[j] = 1.0 / std::sqrt(var + epsilon);
    for (std::size_t i = 0; i < d; ++i)
      out.values[i * n + j] =
          alpha->values[i] * (x->values[i * n + j] - mu) * inv_sd[j] + beta->values[i];
  }

  auto result = make_tensor(std::move(out));
  if (detail::wants_grad(tape, {&x, &alpha, &beta})) {
    result->set_requires_grad(true);
    tape->record([x, alpha, beta, result, d, n, mean, inv_sd]() {
      for (std::size_t j = 0; j < n; ++j) {
        // xhat_i = (x_i - mu) * inv_sd; g_i = dL/dy_i * alpha_i
        double g_sum = 0.0, gx_sum = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
          const double xhat = (x->values[i * n + j] - mean[j]) * inv_sd[j];
          const double gy = result->grad[i * n + j];
          if (alpha->requires_grad) alpha->grad[i] += gy * xhat;
          if (beta->requires_grad) beta->grad[i] += gy;
          const double g = gy * alpha->values[i];
          g_sum += g;
          gx_sum += g * xhat;
        }
        if (x->requires_grad) {
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t i = 0; i < d; ++i) {
            const double xhat = (x->values[i * n + j] - mean[j]) * inv_sd[j];
            const double g = result->grad[i * n + j] * alpha->values[i];
            x->grad[i * n + j] += inv_sd[j] * (g - inv_d * g_sum - xhat * inv_d * gx_sum);
          }
        }
      }
    });
  }
  return result;
}

/// Sum of all entries, as a scalar [1].
inline TensorPtr sum(Tape* tape, const TensorPtr& x) {
  double acc = 0.0;
  for (double v : x->values) acc += v;
  auto result = make_tensor(Tensor::scalar(acc));
  if (detail::wants_grad(tape, {&x})) {
    result->set_requires_grad(true);
    tape->record([x, result]() {
      for (std::size_t i = 0; i < x->size(); ++i) x->grad[i] += result->grad[0];
    });
  }
  return result;
}

namespace detail {

inline TensorPtr column_reduce(Tape* tape, const TensorPtr& x, double factor) {
  if (x->ndim() != 2)
    throw DimensionError("column reduce: expected 2 axes, got " +
                         Tensor::shape_string(x->shape));
  const std::size_t r = x->shape[0], c = x->shape[1];
  Tensor out({r});
  for (std::size_t i = 0; i < r; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < c; ++j) acc += x->values[i * c + j];
    out.values[i] = acc * factor;
  }
  auto result = make_tensor(std::move(out));
  if (wants_grad(tape, {&x})) {
    result->set_requires_grad(true);
    tape->record([x, result, r, c, factor]() {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) x->grad[i * c + j] += result->grad[i] * factor;
    });
  }
  return result;
}

}  // namespace detail

/// Adds the columns of a (d x m) matrix into a d-vector.
inline TensorPtr sum_columns(Tape* tape, const TensorPtr& x) {
  return detail::column_reduce(tape, x, 1.0);
}

/// Averages the columns of a (d x m) matrix into a d-vector.
inline TensorPtr mean_columns(Tape* tape, const TensorPtr& x) {
  if (x->ndim() != 2)
    throw DimensionError("mean_columns: expected 2 axes, got " +
                         Tensor::shape_string(x->shape));
  return detail::column_reduce(tape, x, 1.0 / static_cast<double>(x->shape[1]));
}

/// Assembles equal-length vectors as the columns of a matrix.
inline TensorPtr concat_columns(Tape* tape, const std::vector<TensorPtr>& cols) {
  if (cols.empty()) throw ContractError("concat_columns: no columns");
  const std::size_t d = cols[0]->shape[0];
  for (const auto& v : cols)
    if (v->ndim() != 1 || v->shape[0] != d)
      throw DimensionError("concat_columns: every column must be a length-" + std::to_string(d) +
                           " vector, got " + Tensor::shape_string(v->shape));
  const std::size_t n = cols.size();
  Tensor out({d, n});
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < d; ++i) out.values[i * n + j] = cols[j]->values[i];
  auto result = make_tensor(std::move(out));
  bool track = false;
  if (tape)
    for (const auto& v : cols) track = track || v->requires_grad;
  if (track) {
    result->set_requires_grad(true);
    tape->record([cols, result, d, n]() {
      for (std::size_t j = 0; j < n; ++j)
        if (cols[j]->requires_grad)
          for (std::size_t i = 0; i < d; ++i) cols[j]->grad[i] += result->grad[i * n + j];
    });
  }
  return result;
}

/// Stacks matrices with a common column count on top of each other.
inline TensorPtr concat_rows(Tape* tape, const std::vector<TensorPtr>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no parts");
  const std::size_t c = parts[0]->cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p->ndim() != 2 || p->shape[1] != c)
      throw DimensionError("concat_rows: every part must have " + std::to_string(c) +
                           " columns, got " + Tensor::shape_string(p->shape));
    total += p->shape[0];
  }
  Tensor out({total, c});
  std::size_t row = 0;
  for (const auto& p : parts) {
    std::copy(p->values.begin(), p->values.end(), out.values.begin() + row * c);
    row += p->shape[0];
  }
  auto result = make_tensor(std::move(out));
  bool track = false;
  if (tape)
    for (const auto& p : parts) track = track || p->requires_grad;
  if (track) {
    result->set_requires_grad(true);
    tape->record([parts, result, c]() {
      std::size_t row = 0;
      for (const auto& p : parts) {
        if (p->requires_grad)
          for (std::size_t i = 0; i < p->size(); ++i) p->grad[i] += result->grad[row * c + i];
        row += p->shape[0];
      }
    });
  }
  return result;
}

/// Adds a length-d vector to every column of a (d x n) matrix.
inline TensorPtr add_colwise(Tape* tape, const TensorPtr& x, const TensorPtr& b) {
  if (x->ndim() != 2 || b->ndim() != 1 || b->shape[0] != x->shape[0])
    throw DimensionError("add_colwise: shapes disagree: " + Tensor::shape_string(x->shape) +
                         " vs " + Tensor::shape_string(b->shape));
  const std::size_t r = x->shape[0], c = x->shape[1];
  Tensor out(x->shape);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.values[i * c + j] = x->values[i * c + j] + b->values[i];
  auto result = make_tensor(std::move(out));
  if (detail::wants_grad(tape, {&x, &b})) {
    result->set_requires_grad(true);
    tape->record([x, b, result, r, c]() {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) {
          detail::accumulate(*x, i * c + j, result->grad[i * c + j]);
          detail::accumulate(*b, i, result->grad[i * c + j]);
        }
    });
  }
  return result;
}

/// Embedding lookup: selects columns of a (d x M) matrix by index, repeats
/// allowed. The backward pass scatter-adds into the selected columns.
inline TensorPtr gather_columns(Tape* tape, const TensorPtr& table,
                                const std::vector<std::size_t>& ids) {
  if (table->ndim() != 2)
    throw DimensionError("gather_columns: table must have 2 axes, got " +
                         Tensor::shape_string(table->shape));
  if (ids.empty()) throw ContractError("gather_columns: no ids");
  const std::size_t d = table->shape[0], m = table->shape[1];
  for (std::size_t id : ids)
    if (id >= m)
      throw IndexError("gather_columns: id " + std::to_string(id) + " out of range [0, " +
                       std::to_string(m) + ")");
  const std::size_t n = ids.size();
  Tensor out({d, n});
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < d; ++i) out.values[i * n + j] = table->values[i * m + ids[j]];
  auto result = make_tensor(std::move(out));
  if (detail::wants_grad(tape, {&table})) {
    result->set_requires_grad(true);
    tape->record([table, result, ids, d, m, n]() {
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < d; ++i)
          table->grad[i * m + ids[j]] += result->grad[i * n + j];
    });
  }
  return result;
}

/// Same data, new shape (element count must match). Gradients pass through.
inline TensorPtr reshape(Tape* tape, const TensorPtr& x, std::vector<std::size_t> new_shape) {
  if (Tensor::element_count(new_shape) != x->size())
    throw DimensionError("reshape: cannot view " + Tensor::shape_string(x->shape) + " as " +
                         Tensor::shape_string(new_shape));
  Tensor out(std::move(new_shape), x->values);
  auto result = make_tensor(std::move(out));
  if (detail::wants_grad(tape, {&x})) {
    result->set_requires_grad(true);
    tape->record([x, result]() {
      for (std::size_t i = 0; i < x->size(); ++i) x->grad[i] += result->grad[i];
    });
  }
  return result;
}

/// Inverted dropout: keeps an entry with probability 1-rate and scales it by
/// 1/(1-rate), so the expectation is unchanged. Only used in training mode;
/// the draw order is fixed (row-major), so a seeded rng makes it repeatable.
inline TensorPtr dropout(Tape* tape, const TensorPtr& x, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw ContractError("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  if (rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(x->size());
  for (std::size_t i = 0; i < x->size(); ++i)
    (*mask)[i] = rng.next_unit() >= rate ? keep_scale : 0.0;
  Tensor out(x->shape);
  for (std::size_t i = 0; i < x->size(); ++i) out.values[i] = x->values[i] * (*mask)[i];
  auto result = make_tensor(std::move(out));
  if (detail::wants_grad(tape, {&x})) {
    result->set_requires_grad(true);
    tape->record([x, result, mask]() {
      for (std::size_t i = 0; i < x->size(); ++i) x->grad[i] += result->grad[i] * (*mask)[i];
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

/// A scalar-valued differentiable function of one tensor, expressed through
/// taped primitives.
using TensorFn = std::function<TensorPtr(Tape&, const TensorPtr&)>;

/// Compares the taped gradient of f at x against central finite differences
/// with the given step. Returns max_i |analytic_i - numeric_i| / max(1, |numeric_i|).
inline double finite_difference_check(const TensorFn& f, const Tensor& x, double step) {
  auto leaf = make_parameter(x);
  Tape tape;
  auto loss = f(tape, leaf);
  if (loss->size() != 1) throw ContractError("finite_difference_check: f must be scalar-valued");
  tape.backward(loss);
  const std::vector<double> analytic = leaf->grad;

  auto eval = [&f](const Tensor& point) {
    Tape scratch;
    auto frozen = make_tensor(point);
    return f(scratch, frozen)->values[0];
  };

  double worst = 0.0;
  Tensor probe = x;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double saved = probe.values[i];
    probe.values[i] = saved + step;
    const double up = eval(probe);
    probe.values[i] = saved - step;
    const double down = eval(probe);
    probe.values[i] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace tlsrec
