#pragma once

// Dense float64 tensors with a tape-based reverse-mode differentiator.
//
// Every op takes the Tape it records onto. An op whose inputs do not require
// gradients produces a constant and records nothing. Tape::backward() replays
// the recorded rules in reverse and accumulates into the leaves.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "cntm/errors.hpp"

namespace cntm::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;

  double* grad_data() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad.data();
  }
};

class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    if (shape.empty() || std::find(shape.begin(), shape.end(), 0u) != shape.end())
      throw DimensionError("tensor shape must be non-empty with positive extents, got " +
                           shape_string(shape));
    if (values.size() != numel(shape))
      throw DimensionError("tensor of shape " + shape_string(shape) + " needs " +
                           std::to_string(numel(shape)) + " values, got " +
                           std::to_string(values.size()));
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }
  static Tensor scalar(double v, bool requires_grad = false) {
    return Tensor({1}, {v}, requires_grad);
  }
  static Tensor vector(std::vector<double> v, bool requires_grad = false) {
    const auto n = v.size();
    return Tensor({n}, std::move(v), requires_grad);
  }

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const double> values() const { return node_->value; }
  double operator[](std::size_t i) const { return node_->value[i]; }
  double item() const {
    if (size() != 1) throw UsageError("item() on tensor of shape " + shape_string(shape()));
    return node_->value[0];
  }

  bool has_grad() const { return !node_->grad.empty(); }
  // Zero-filled view when nothing has been accumulated yet.
  std::span<const double> grad() const {
    node_->grad_data();
    return node_->grad;
  }
  void zero_grad() { node_->grad.clear(); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  friend class Tape;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  std::shared_ptr<Node> node_;
};

using NodePtr = std::shared_ptr<Node>;

class Tape {
 public:
  using Rule = std::function<void(Node& out)>;

  // Wraps a freshly computed value. The rule runs only if some input needs gradients.
  Tensor emit(Shape shape, std::vector<double> value, bool requires_grad, Rule rule) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    if (requires_grad) records_.push_back({node, std::move(rule)});
    return Tensor(std::move(node));
  }

  std::size_t size() const noexcept { return records_.size(); }

  void backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1)
      throw UsageError("backward() needs a scalar loss, got " +
                       (loss.defined() ? shape_string(loss.shape()) : std::string("undefined")));
    if (!loss.requires_grad()) return;
    // Intermediate gradients are rebuilt on each call; only leaves accumulate.
    for (auto& r : records_) r.out->grad.clear();
    loss.node()->grad_data()[0] = 1.0;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
      if (it->out->grad.empty()) continue;  // not on any path to the loss
      it->rule(*it->out);
    }
  }

 private:
  struct Record {
    NodePtr out;
    Rule rule;
  };
  std::vector<Record> records_;
};

namespace detail {

inline bool any_grad(std::initializer_list<const Tensor*> ts) {
  return std::any_of(ts.begin(), ts.end(), [](const Tensor* t) { return t->requires_grad(); });
}

inline void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank)
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         " tensor, got " + shape_string(t.shape()));
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

// Stable softmax of `n` values starting at `in`.
inline void softmax_into(const double* in, double* out, std::size_t n) {
  const double mx = *std::max_element(in, in + n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += (out[i] = std::exp(in[i] - mx));
  for (std::size_t i = 0; i < n; ++i) out[i] /= total;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

// [p x q] . [q x r] -> [p x r]; a rank-1 right operand [q] is a column and yields [p].
inline Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 2, "matmul");
  if (b.rank() != 1 && b.rank() != 2)
    throw DimensionError("matmul: right operand must be rank 1 or 2, got " + shape_string(b.shape()));
  const std::size_t p = a.shape()[0], q = a.shape()[1];
  const std::size_t r = b.rank() == 2 ? b.shape()[1] : 1;
  if (b.shape()[0] != q)
    throw DimensionError("matmul: inner dimensions differ for " + shape_string(a.shape()) + " . " +
                         shape_string(b.shape()));
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using CMap = Eigen::Map<const RowMajor>;
  using MMap = Eigen::Map<RowMajor>;
  std::vector<double> out(p * r);
  MMap(out.data(), p, r).noalias() = CMap(a.values().data(), p, q) * CMap(b.values().data(), q, r);
  Shape shape = b.rank() == 2 ? Shape{p, r} : Shape{p};
  auto an = a.node(), bn = b.node();
  return tape.emit(std::move(shape), std::move(out), detail::any_grad({&a, &b}),
                   [an, bn, p, q, r](Node& o) {
                     CMap G(o.grad.data(), p, r);
                     if (an->requires_grad)
                       MMap(an->grad_data(), p, q).noalias() += G * CMap(bn->value.data(), q, r).transpose();
                     if (bn->requires_grad)
                       MMap(bn->grad_data(), q, r).noalias() += CMap(an->value.data(), p, q).transpose() * G;
                   });
}

inline Tensor transpose(Tape& tape, const Tensor& a) {
  detail::require_rank(a, 2, "transpose");
  const std::size_t p = a.shape()[0], q = a.shape()[1];
  std::vector<double> out(p * q);
  const double* A = a.values().data();
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < q; ++j) out[j * p + i] = A[i * q + j];
  auto an = a.node();
  return tape.emit({q, p}, std::move(out), a.requires_grad(), [an, p, q](Node& o) {
    double* GA = an->grad_data();
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < q; ++j) GA[i * q + j] += o.grad[j * p + i];
  });
}

// u[n] v[m]^T -> [n x m]
inline Tensor outer(Tape& tape, const Tensor& u, const Tensor& v) {
  detail::require_rank(u, 1, "outer");
  detail::require_rank(v, 1, "outer");
  const std::size_t n = u.size(), m = v.size();
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = u[i] * v[j];
  auto un = u.node(), vn = v.node();
  return tape.emit({n, m}, std::move(out), detail::any_grad({&u, &v}), [un, vn, n, m](Node& o) {
    const double* G = o.grad.data();
    if (un->requires_grad) {
      double* GU = un->grad_data();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) GU[i] += G[i * m + j] * vn->value[j];
    }
    if (vn->requires_grad) {
      double* GV = vn->grad_data();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) GV[j] += G[i * m + j] * un->value[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Pointwise

enum class Elementwise { add, sub, mul, one_minus };

// Shapes must be equal, or one operand must hold a single element.
inline Tensor elementwise(Tape& tape, Elementwise kind, const Tensor& a, const Tensor* b = nullptr) {
  if (kind == Elementwise::one_minus) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 - a[i];
    auto an = a.node();
    return tape.emit(a.shape(), std::move(out), a.requires_grad(), [an](Node& o) {
      double* GA = an->grad_data();
      for (std::size_t i = 0; i < o.grad.size(); ++i) GA[i] -= o.grad[i];
    });
  }
  if (b == nullptr) throw UsageError("elementwise: binary op needs a second operand");
  const bool same = a.shape() == b->shape();
  const bool a_scalar = a.size() == 1, b_scalar = b->size() == 1;
  if (!same && !a_scalar && !b_scalar)
    throw DimensionError("elementwise: incompatible shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b->shape()));
  const Shape shape = (same || b_scalar) ? a.shape() : b->shape();
  const std::size_t n = numel(shape);
  const std::size_t sa = (a.size() == n) ? 1 : 0;  // index strides: 0 broadcasts
  const std::size_t sb = (b->size() == n) ? 1 : 0;
  std::vector<double> out(n);
  const double* A = a.values().data();
  const double* B = b->values().data();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = A[i * sa], y = B[i * sb];
    switch (kind) {
      case Elementwise::add: out[i] = x + y; break;
      case Elementwise::sub: out[i] = x - y; break;
      default: out[i] = x * y; break;
    }
  }
  auto an = a.node(), bn = b->node();
  return tape.emit(shape, std::move(out), detail::any_grad({&a, b}), [an, bn, kind, n, sa, sb](Node& o) {
    const double* G = o.grad.data();
    if (an->requires_grad) {
      double* GA = an->grad_data();
      for (std::size_t i = 0; i < n; ++i) {
        const double d = kind == Elementwise::mul ? bn->value[i * sb] : 1.0;
        GA[i * sa] += G[i] * d;
      }
    }
    if (bn->requires_grad) {
      double* GB = bn->grad_data();
      for (std::size_t i = 0; i < n; ++i) {
        const double d = kind == Elementwise::mul ? an->value[i * sa]
                         : kind == Elementwise::sub ? -1.0
                                                    : 1.0;
        GB[i * sb] += G[i] * d;
      }
    }
  });
}

inline Tensor add(Tape& t, const Tensor& a, const Tensor& b) { return elementwise(t, Elementwise::add, a, &b); }
inline Tensor sub(Tape& t, const Tensor& a, const Tensor& b) { return elementwise(t, Elementwise::sub, a, &b); }
inline Tensor mul(Tape& t, const Tensor& a, const Tensor& b) { return elementwise(t, Elementwise::mul, a, &b); }
inline Tensor one_minus(Tape& t, const Tensor& a) { return elementwise(t, Elementwise::one_minus, a); }

enum class Activation { sigmoid, tanh, relu, softmax, oneplus };

inline Activation activation_from_string(std::string_view name) {
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  if (name == "softmax") return Activation::softmax;
  if (name == "oneplus") return Activation::oneplus;
  throw UsageError("unknown activation '" + std::string(name) + "'");
}

// Softmax normalizes over the last axis.
inline Tensor activation(Tape& tape, Activation kind, const Tensor& x) {
  const std::size_t n = x.size();
  std::vector<double> out(n);
  const double* X = x.values().data();
  const std::size_t row = x.shape().back();
  switch (kind) {
    case Activation::sigmoid:
      for (std::size_t i = 0; i < n; ++i) out[i] = detail::sigmoid(X[i]);
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(X[i]);
      break;
    case Activation::relu:
      for (std::size_t i = 0; i < n; ++i) out[i] = X[i] > 0.0 ? X[i] : 0.0;
      break;
    case Activation::oneplus:
      for (std::size_t i = 0; i < n; ++i) out[i] = 1.0 + detail::softplus(X[i]);
      break;
    case Activation::softmax:
      for (std::size_t r = 0; r < n; r += row) detail::softmax_into(X + r, out.data() + r, row);
      break;
  }
  auto xn = x.node();
  return tape.emit(x.shape(), std::move(out), x.requires_grad(), [xn, kind, n, row](Node& o) {
    double* GX = xn->grad_data();
    const double* G = o.grad.data();
    const double* Y = o.value.data();
    switch (kind) {
      case Activation::sigmoid:
        for (std::size_t i = 0; i < n; ++i) GX[i] += G[i] * Y[i] * (1.0 - Y[i]);
        break;
      case Activation::tanh:
        for (std::size_t i = 0; i < n; ++i) GX[i] += G[i] * (1.0 - Y[i] * Y[i]);
        break;
      case Activation::relu:
        for (std::size_t i = 0; i < n; ++i) GX[i] += xn->value[i] > 0.0 ? G[i] : 0.0;
        break;
      case Activation::oneplus:
        for (std::size_t i = 0; i < n; ++i) GX[i] += G[i] * detail::sigmoid(xn->value[i]);
        break;
      case Activation::softmax:
        for (std::size_t r = 0; r < n; r += row) {
          double dot = 0.0;
          for (std::size_t i = r; i < r + row; ++i) dot += G[i] * Y[i];
          for (std::size_t i = r; i < r + row; ++i) GX[i] += Y[i] * (G[i] - dot);
        }
        break;
    }
  });
}

inline Tensor sigmoid(Tape& t, const Tensor& x) { return activation(t, Activation::sigmoid, x); }
inline Tensor tanh(Tape& t, const Tensor& x) { return activation(t, Activation::tanh, x); }
inline Tensor relu(Tape& t, const Tensor& x) { return activation(t, Activation::relu, x); }
inline Tensor softmax(Tape& t, const Tensor& x) { return activation(t, Activation::softmax, x); }
inline Tensor oneplus(Tape& t, const Tensor& x) { return activation(t, Activation::oneplus, x); }

// log(softmax(x)) for a vector, computed without forming the probabilities.
inline Tensor log_softmax(Tape& tape, const Tensor& x) {
  detail::require_rank(x, 1, "log_softmax");
  const std::size_t n = x.size();
  const double mx = *std::max_element(x.values().begin(), x.values().end());
  double total = 0.0;
  for (double v : x.values()) total += std::exp(v - mx);
  const double lse = mx + std::log(total);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] - lse;
  auto xn = x.node();
  return tape.emit(x.shape(), std::move(out), x.requires_grad(), [xn, n](Node& o) {
    double gsum = 0.0;
    for (double g : o.grad) gsum += g;
    double* GX = xn->grad_data();
    for (std::size_t i = 0; i < n; ++i) GX[i] += o.grad[i] - std::exp(o.value[i]) * gsum;
  });
}

// ---------------------------------------------------------------------------
// Structural

inline Tensor sum(Tape& tape, const Tensor& x) {
  const double s = std::accumulate(x.values().begin(), x.values().end(), 0.0);
  auto xn = x.node();
  return tape.emit({1}, {s}, x.requires_grad(), [xn](Node& o) {
    double* GX = xn->grad_data();
    for (std::size_t i = 0; i < xn->value.size(); ++i) GX[i] += o.grad[0];
  });
}

inline Tensor pick(Tape& tape, const Tensor& x, std::size_t index) {
  if (index >= x.size())
    throw DimensionError("pick: index " + std::to_string(index) + " outside " + shape_string(x.shape()));
  auto xn = x.node();
  return tape.emit({1}, {x[index]}, x.requires_grad(),
                   [xn, index](Node& o) { xn->grad_data()[index] += o.grad[0]; });
}

inline Tensor scale(Tape& tape, const Tensor& x, double factor) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (double& v : out) v *= factor;
  auto xn = x.node();
  return tape.emit(x.shape(), std::move(out), x.requires_grad(), [xn, factor](Node& o) {
    double* GX = xn->grad_data();
    for (std::size_t i = 0; i < o.grad.size(); ++i) GX[i] += factor * o.grad[i];
  });
}

// Flattens and joins; the result is rank 1.
inline Tensor concat(Tape& tape, std::initializer_list<Tensor> parts) {
  std::vector<double> out;
  bool rg = false;
  std::vector<NodePtr> nodes;
  for (const auto& p : parts) {
    out.insert(out.end(), p.values().begin(), p.values().end());
    rg = rg || p.requires_grad();
    nodes.push_back(p.node());
  }
  const std::size_t n = out.size();
  return tape.emit({n}, std::move(out), rg, [nodes = std::move(nodes)](Node& o) {
    std::size_t off = 0;
    for (const auto& p : nodes) {
      if (p->requires_grad) {
        double* GP = p->grad_data();
        for (std::size_t i = 0; i < p->value.size(); ++i) GP[i] += o.grad[off + i];
      }
      off += p->value.size();
    }
  });
}

// Contiguous run of `length` flat elements starting at `offset`, as a vector.
inline Tensor slice(Tape& tape, const Tensor& x, std::size_t offset, std::size_t length) {
  if (length == 0 || offset + length > x.size())
    throw DimensionError("slice [" + std::to_string(offset) + ", " + std::to_string(offset + length) +
                         ") outside " + shape_string(x.shape()));
  std::vector<double> out(x.values().begin() + static_cast<std::ptrdiff_t>(offset),
                          x.values().begin() + static_cast<std::ptrdiff_t>(offset + length));
  auto xn = x.node();
  return tape.emit({length}, std::move(out), x.requires_grad(), [xn, offset](Node& o) {
    double* GX = xn->grad_data() + offset;
    for (std::size_t i = 0; i < o.grad.size(); ++i) GX[i] += o.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Memory addressing primitives

inline constexpr double kCosineEps = 1e-8;

// u.v / (max(|u|,eps) max(|v|,eps)) for every row of `rows` against `key`.
inline Tensor cosine_similarity_rows(Tape& tape, const Tensor& rows, const Tensor& key,
                                     double eps = kCosineEps) {
  detail::require_rank(rows, 2, "cosine_similarity_rows");
  detail::require_rank(key, 1, "cosine_similarity_rows");
  const std::size_t n = rows.shape()[0], m = rows.shape()[1];
  if (key.size() != m)
    throw DimensionError("cosine_similarity: key " + shape_string(key.shape()) + " vs rows " +
                         shape_string(rows.shape()));
  const double* M = rows.values().data();
  const double* K = key.values().data();
  double knorm = 0.0;
  for (std::size_t j = 0; j < m; ++j) knorm += K[j] * K[j];
  knorm = std::sqrt(knorm);
  const double kden = std::max(knorm, eps);
  std::vector<double> out(n), rden(n), rnorm(n);
  for (std::size_t i = 0; i < n; ++i) {
    double dot = 0.0, nn = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      dot += M[i * m + j] * K[j];
      nn += M[i * m + j] * M[i * m + j];
    }
    rnorm[i] = std::sqrt(nn);
    rden[i] = std::max(rnorm[i], eps);
    out[i] = dot / (rden[i] * kden);
  }
  auto rn = rows.node(), kn = key.node();
  return tape.emit({n}, std::move(out), detail::any_grad({&rows, &key}),
                   [rn, kn, n, m, eps, knorm, kden, rden = std::move(rden), rnorm = std::move(rnorm)](Node& o) {
                     const double* M = rn->value.data();
                     const double* K = kn->value.data();
                     double* GM = rn->requires_grad ? rn->grad_data() : nullptr;
                     double* GK = kn->requires_grad ? kn->grad_data() : nullptr;
                     for (std::size_t i = 0; i < n; ++i) {
                       const double g = o.grad[i];
                       if (g == 0.0) continue;
                       const double c = o.value[i];
                       const double inv = 1.0 / (rden[i] * kden);
                       const bool row_active = rnorm[i] > eps;
                       const bool key_active = knorm > eps;
                       for (std::size_t j = 0; j < m; ++j) {
                         if (GM) {
                           double d = K[j] * inv;
                           if (row_active) d -= c * M[i * m + j] / (rden[i] * rden[i]);
                           GM[i * m + j] += g * d;
                         }
                         if (GK) {
                           double d = M[i * m + j] * inv;
                           if (key_active) d -= c * K[j] / (kden * kden);
                           GK[j] += g * d;
                         }
                       }
                     }
                   });
}

inline Tensor cosine_similarity(Tape& tape, const Tensor& u, const Tensor& v, double eps = kCosineEps) {
  detail::require_rank(u, 1, "cosine_similarity");
  detail::require_rank(v, 1, "cosine_similarity");
  if (u.size() != v.size())
    throw DimensionError("cosine_similarity: " + shape_string(u.shape()) + " vs " + shape_string(v.shape()));
  // A single-row matrix view of u shares the kernel above.
  auto un = u.node();
  Tensor row = tape.emit({1, u.size()}, std::vector<double>(u.values().begin(), u.values().end()),
                         u.requires_grad(), [un](Node& o) {
                           double* GU = un->grad_data();
                           for (std::size_t i = 0; i < o.grad.size(); ++i) GU[i] += o.grad[i];
                         });
  return cosine_similarity_rows(tape, row, v, eps);
}

// out_i = sum_j w[(i - j) mod n] * s_j over offsets j in [-(k-1)/2, (k-1)/2].
inline Tensor circular_convolve(Tape& tape, const Tensor& w, const Tensor& s) {
  detail::require_rank(w, 1, "circular_convolve");
  detail::require_rank(s, 1, "circular_convolve");
  const std::size_t n = w.size(), k = s.size();
  if (k % 2 == 0 || k > n)
    throw DimensionError("circular_convolve: shift width " + std::to_string(k) +
                         " must be odd and at most " + std::to_string(n));
  const auto half = static_cast<std::ptrdiff_t>(k / 2);
  const auto sn = static_cast<std::ptrdiff_t>(n);
  auto src = [sn](std::ptrdiff_t i, std::ptrdiff_t off) {
    return static_cast<std::size_t>(((i - off) % sn + sn) % sn);
  };
  std::vector<double> out(n, 0.0);
  for (std::ptrdiff_t i = 0; i < sn; ++i)
    for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(k); ++j)
      out[static_cast<std::size_t>(i)] += w[src(i, j - half)] * s[static_cast<std::size_t>(j)];
  auto wn = w.node(), snode = s.node();
  return tape.emit({n}, std::move(out), detail::any_grad({&w, &s}), [wn, snode, sn, k, half, src](Node& o) {
    double* GW = wn->requires_grad ? wn->grad_data() : nullptr;
    double* GS = snode->requires_grad ? snode->grad_data() : nullptr;
    for (std::ptrdiff_t i = 0; i < sn; ++i) {
      const double g = o.grad[static_cast<std::size_t>(i)];
      for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(k); ++j) {
        const std::size_t from = src(i, j - half);
        if (GW) GW[from] += g * snode->value[static_cast<std::size_t>(j)];
        if (GS) GS[j] += g * wn->value[from];
      }
    }
  });
}

// out_i = w_i^gamma / sum_j w_j^gamma, evaluated as a softmax of gamma*log(w).
inline Tensor pow_normalize(Tape& tape, const Tensor& w, const Tensor& gamma) {
  detail::require_rank(w, 1, "pow_normalize");
  if (gamma.size() != 1) throw DimensionError("pow_normalize: gamma must be a scalar");
  const double g = gamma.item();
  const std::size_t n = w.size();
  constexpr double ninf = -std::numeric_limits<double>::infinity();
  std::vector<double> logits(n);
  bool any_positive = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (w[i] < 0.0 || !std::isfinite(w[i]))
      throw NumericalError("pow_normalize: weight " + std::to_string(i) + " is " + std::to_string(w[i]));
    any_positive = any_positive || w[i] > 0.0;
    logits[i] = w[i] > 0.0 ? g * std::log(w[i]) : ninf;
  }
  if (!any_positive) throw NumericalError("pow_normalize: all weights are zero");
  std::vector<double> out(n);
  detail::softmax_into(logits.data(), out.data(), n);
  auto wn = w.node(), gn = gamma.node();
  return tape.emit({n}, std::move(out), detail::any_grad({&w, &gamma}), [wn, gn, n, g](Node& o) {
    double dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) dot += o.grad[i] * o.value[i];
    double* GW = wn->requires_grad ? wn->grad_data() : nullptr;
    double* GG = gn->requires_grad ? gn->grad_data() : nullptr;
    for (std::size_t i = 0; i < n; ++i) {
      const double wi = wn->value[i];
      if (wi <= 0.0) continue;
      const double dlogit = o.value[i] * (o.grad[i] - dot);
      if (GW) GW[i] += dlogit * g / wi;
      if (GG) GG[0] += dlogit * std::log(wi);
    }
  });
}

}  // namespace cntm::ad
