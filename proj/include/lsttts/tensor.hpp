// Copyright 2026 The lsttts Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Reverse-mode autodiff engine over dense row-major tensors.
//
// A TensorT<S> is a shared handle to a graph node. Ops build new nodes whose
// backprop closures accumulate into their parents' grad buffers; backward()
// walks the graph in reverse topological order. The scalar type S is float
// for training and double for finite-difference gradient suites.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "lsttts/rng.hpp"

namespace lsttts {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

inline std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// Row-major strides.
inline std::vector<std::size_t> natural_strides(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
  return strides;
}

[[noreturn]] inline void shape_error(const std::string& op, const std::string& detail) {
  throw std::invalid_argument(op + ": " + detail);
}

namespace autograd {

// Thread-local switch: with grad disabled, ops record no parents and
// backward closures are never created (inference / numeric probes).
inline bool& grad_enabled() {
  static thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  NoGradGuard() : prev_(grad_enabled()) { grad_enabled() = false; }
  ~NoGradGuard() { grad_enabled() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

inline std::uint64_t next_node_id() {
  static std::atomic<std::uint64_t> counter{0};
  return counter.fetch_add(1, std::memory_order_relaxed) + 1;
}

}  // namespace autograd

template <typename S>
struct TensorNode {
  Shape shape;
  std::vector<S> value;
  std::vector<S> grad;  // empty until populated by backward()
  bool requires_grad = false;
  std::uint64_t id = autograd::next_node_id();
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backprop;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), S(0));
  }
};

template <typename S>
class TensorT {
 public:
  using Node = TensorNode<S>;
  using value_type = S;

  TensorT() = default;
  explicit TensorT(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static TensorT zeros(Shape shape) {
    auto n = std::make_shared<Node>();
    n->value.assign(numel(shape), S(0));
    n->shape = std::move(shape);
    return TensorT(std::move(n));
  }

  static TensorT full(Shape shape, S fill) {
    auto n = std::make_shared<Node>();
    n->value.assign(numel(shape), fill);
    n->shape = std::move(shape);
    return TensorT(std::move(n));
  }

  static TensorT from_data(Shape shape, std::vector<S> data) {
    if (numel(shape) != data.size())
      shape_error("from_data", "shape " + shape_to_string(shape) + " does not hold " +
                                   std::to_string(data.size()) + " values");
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    return TensorT(std::move(n));
  }

  static TensorT scalar(S v) { return full({}, v); }

  static TensorT randn(Shape shape, Rng& rng, double sd = 1.0) {
    auto t = zeros(std::move(shape));
    for (auto& v : t.node_->value) v = static_cast<S>(rng.normal(0.0, sd));
    return t;
  }

  static TensorT rand_uniform(Shape shape, Rng& rng, double lo, double hi) {
    auto t = zeros(std::move(shape));
    for (auto& v : t.node_->value) v = static_cast<S>(rng.uniform(lo, hi));
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }

  const std::vector<S>& values() const { return node_->value; }
  // Leaf mutation: used by the optimizer and by finite-difference probes.
  std::vector<S>& mutable_values() { return node_->value; }

  bool has_grad() const { return !node_->grad.empty(); }
  const std::vector<S>& grad() const { return node_->grad; }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), S(0));
  }
  void clear_grad() { node_->grad.clear(); }

  bool requires_grad() const { return node_->requires_grad; }
  TensorT& set_requires_grad(bool rg) {
    node_->requires_grad = rg;
    return *this;
  }

  std::uint64_t node_id() const { return node_->id; }

  S item() const {
    if (size() != 1) shape_error("item", "tensor " + shape_to_string(shape()) + " is not scalar");
    return node_->value[0];
  }

  S at(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != rank()) shape_error("at", "index rank mismatch");
    auto strides = natural_strides(shape());
    std::size_t off = 0, d = 0;
    for (std::size_t i : idx) off += i * strides[d++];
    return node_->value[off];
  }

  std::shared_ptr<Node>& node() { return node_; }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

namespace detail {

// Builds the result node of an op. Parents and the backprop closure are only
// recorded when some parent requires grad and grad mode is on, so inference
// graphs stay flat.
template <typename S>
TensorT<S> make_result(Shape shape, std::vector<S> value,
                       std::vector<TensorT<S>> parents,
                       std::function<void(TensorNode<S>&)> backprop) {
  auto n = std::make_shared<TensorNode<S>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool needs = false;
  if (autograd::grad_enabled()) {
    for (const auto& p : parents) needs = needs || p.requires_grad();
  }
  if (needs) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backprop = std::move(backprop);
  }
  return TensorT<S>(std::move(n));
}

// Trailing-aligned broadcast plan. sa/sb hold per-output-dim strides into the
// two operands, zero where an operand is broadcast.
struct BinaryPlan {
  Shape out_shape;
  std::vector<std::size_t> sa, sb;
  bool same_shape = false;
};

inline BinaryPlan make_binary_plan(const Shape& a, const Shape& b, const char* op) {
  BinaryPlan plan;
  if (a == b) {
    plan.out_shape = a;
    plan.same_shape = true;
    return plan;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  plan.out_shape.assign(rank, 0);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
    const std::size_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
    std::size_t out;
    if (da == db) {
      out = da;
    } else if (da == 1) {
      out = db;
    } else if (db == 1) {
      out = da;
    } else {
      shape_error(op, "shapes " + shape_to_string(a) + " and " + shape_to_string(b) +
                          " are not broadcast-compatible");
    }
    plan.out_shape[rank - 1 - i] = out;
  }
  auto stride_of = [&](const Shape& s) {
    auto nat = natural_strides(s);
    std::vector<std::size_t> eff(rank, 0);
    for (std::size_t i = 0; i < rank; ++i) {
      if (i < s.size()) {
        const std::size_t dim = s[s.size() - 1 - i];
        eff[rank - 1 - i] = (dim == 1 && plan.out_shape[rank - 1 - i] != 1)
                                ? 0
                                : nat[s.size() - 1 - i];
      }
    }
    return eff;
  };
  plan.sa = stride_of(a);
  plan.sb = stride_of(b);
  return plan;
}

// Calls f(out_index, off_a, off_b) for every output element.
template <typename F>
void for_each_pair(const BinaryPlan& plan, F&& f) {
  const std::size_t count = numel(plan.out_shape);
  if (count == 0) return;
  if (plan.same_shape) {
    for (std::size_t i = 0; i < count; ++i) f(i, i, i);
    return;
  }
  const std::size_t rank = plan.out_shape.size();
  std::vector<std::size_t> idx(rank, 0);
  std::size_t offa = 0, offb = 0;
  for (std::size_t i = 0; i < count; ++i) {
    f(i, offa, offb);
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      offa += plan.sa[d];
      offb += plan.sb[d];
      if (idx[d] < plan.out_shape[d]) break;
      idx[d] = 0;
      offa -= plan.sa[d] * plan.out_shape[d];
      offb -= plan.sb[d] * plan.out_shape[d];
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Pointwise ops
// ---------------------------------------------------------------------------

// fwd(a,b) -> out; dfa/dfb(a,b,out) -> local partials. Broadcast backward sums
// over broadcast axes by accumulating through the shared plan.
template <typename S, typename Fwd, typename Dfa, typename Dfb>
TensorT<S> binary_pointwise(const char* name, const TensorT<S>& a, const TensorT<S>& b, Fwd fwd,
                            Dfa dfa, Dfb dfb) {
  auto plan = detail::make_binary_plan(a.shape(), b.shape(), name);
  std::vector<S> out(numel(plan.out_shape));
  const S* av = a.values().data();
  const S* bv = b.values().data();
  detail::for_each_pair(plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
    out[i] = fwd(av[ia], bv[ib]);
  });
  auto an = a.node();
  auto bn = b.node();
  return detail::make_result<S>(
      plan.out_shape, std::move(out), {a, b},
      [plan, an, bn, dfa, dfb](TensorNode<S>& node) {
        const S* g = node.grad.data();
        const S* av2 = an->value.data();
        const S* bv2 = bn->value.data();
        const S* ov = node.value.data();
        const bool need_a = an->requires_grad;
        const bool need_b = bn->requires_grad;
        if (need_a) an->ensure_grad();
        if (need_b) bn->ensure_grad();
        S* ga = need_a ? an->grad.data() : nullptr;
        S* gb = need_b ? bn->grad.data() : nullptr;
        detail::for_each_pair(plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
          if (need_a) ga[ia] += g[i] * dfa(av2[ia], bv2[ib], ov[i]);
          if (need_b) gb[ib] += g[i] * dfb(av2[ia], bv2[ib], ov[i]);
        });
      });
}

template <typename S, typename Fwd, typename Df>
TensorT<S> unary_pointwise(const char*, const TensorT<S>& x, Fwd fwd, Df df) {
  std::vector<S> out(x.size());
  const S* xv = x.values().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
  auto xn = x.node();
  return detail::make_result<S>(x.shape(), std::move(out), {x}, [xn, df](TensorNode<S>& node) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const S* g = node.grad.data();
    const S* xv2 = xn->value.data();
    const S* ov = node.value.data();
    S* gx = xn->grad.data();
    for (std::size_t i = 0; i < node.value.size(); ++i) gx[i] += g[i] * df(xv2[i], ov[i]);
  });
}

template <typename S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
  return binary_pointwise(
      "add", a, b, [](S x, S y) { return x + y; }, [](S, S, S) { return S(1); },
      [](S, S, S) { return S(1); });
}

template <typename S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
  return binary_pointwise(
      "sub", a, b, [](S x, S y) { return x - y; }, [](S, S, S) { return S(1); },
      [](S, S, S) { return S(-1); });
}

template <typename S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
  return binary_pointwise(
      "mul", a, b, [](S x, S y) { return x * y; }, [](S, S y, S) { return y; },
      [](S x, S, S) { return x; });
}

template <typename S>
TensorT<S> div(const TensorT<S>& a, const TensorT<S>& b) {
  return binary_pointwise(
      "div", a, b, [](S x, S y) { return x / y; }, [](S, S y, S) { return S(1) / y; },
      [](S, S y, S o) { return -o / y; });
}

template <typename S>
TensorT<S> scale(const TensorT<S>& x, S c) {
  return unary_pointwise(
      "scale", x, [c](S v) { return c * v; }, [c](S, S) { return c; });
}

template <typename S>
TensorT<S> add_scalar(const TensorT<S>& x, S c) {
  return unary_pointwise(
      "add_scalar", x, [c](S v) { return v + c; }, [](S, S) { return S(1); });
}

template <typename S>
TensorT<S> relu(const TensorT<S>& x) {
  return unary_pointwise(
      "relu", x, [](S v) { return v > S(0) ? v : S(0); },
      [](S v, S) { return v > S(0) ? S(1) : S(0); });
}

template <typename S>
S stable_sigmoid(S x) {
  if (x >= S(0)) return S(1) / (S(1) + std::exp(-x));
  const S e = std::exp(x);
  return e / (S(1) + e);
}

template <typename S>
TensorT<S> sigmoid(const TensorT<S>& x) {
  return unary_pointwise(
      "sigmoid", x, [](S v) { return stable_sigmoid(v); },
      [](S, S o) { return o * (S(1) - o); });
}

template <typename S>
TensorT<S> tanh_op(const TensorT<S>& x) {
  return unary_pointwise(
      "tanh", x, [](S v) { return std::tanh(v); }, [](S, S o) { return S(1) - o * o; });
}

template <typename S>
TensorT<S> exp_op(const TensorT<S>& x) {
  return unary_pointwise(
      "exp", x, [](S v) { return std::exp(v); }, [](S, S o) { return o; });
}

template <typename S>
TensorT<S> log_op(const TensorT<S>& x) {
  for (S v : x.values())
    if (!(v > S(0))) shape_error("log", "nonpositive input " + std::to_string(double(v)));
  return unary_pointwise(
      "log", x, [](S v) { return std::log(v); }, [](S v, S) { return S(1) / v; });
}

template <typename S>
TensorT<S> sqrt_op(const TensorT<S>& x) {
  for (S v : x.values())
    if (v < S(0)) shape_error("sqrt", "negative input " + std::to_string(double(v)));
  return unary_pointwise(
      "sqrt", x, [](S v) { return std::sqrt(v); },
      [](S, S o) { return S(1) / (S(2) * o); });
}

template <typename S>
TensorT<S> neg(const TensorT<S>& x) {
  return scale(x, S(-1));
}

template <typename S>
TensorT<S> operator+(const TensorT<S>& a, const TensorT<S>& b) { return add(a, b); }
template <typename S>
TensorT<S> operator-(const TensorT<S>& a, const TensorT<S>& b) { return sub(a, b); }
template <typename S>
TensorT<S> operator*(const TensorT<S>& a, const TensorT<S>& b) { return mul(a, b); }

// ---------------------------------------------------------------------------
// Matmul: [..., M, K] x [..., K, N] -> [..., M, N], leading batch dims equal
// or broadcast from 1.
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2)
    shape_error("matmul", "operands must have rank >= 2, got " + shape_to_string(sa) + " and " +
                              shape_to_string(sb));
  const std::size_t M = sa[sa.size() - 2], K = sa[sa.size() - 1];
  const std::size_t Kb = sb[sb.size() - 2], N = sb[sb.size() - 1];
  if (K != Kb)
    shape_error("matmul", "inner dimensions differ: " + shape_to_string(sa) + " vs " +
                              shape_to_string(sb));
  Shape batch_a(sa.begin(), sa.end() - 2), batch_b(sb.begin(), sb.end() - 2);
  auto plan = detail::make_binary_plan(batch_a, batch_b, "matmul");
  // Batch strides are in units of whole matrices.
  Shape out_shape = plan.out_shape;
  out_shape.push_back(M);
  out_shape.push_back(N);
  std::vector<S> out(numel(out_shape), S(0));

  const std::size_t mat_a = M * K, mat_b = K * N, mat_o = M * N;
  const S* av = a.values().data();
  const S* bv = b.values().data();
  detail::for_each_pair(plan, [&](std::size_t ob, std::size_t ia, std::size_t ib) {
    const S* A = av + ia * mat_a;
    const S* B = bv + ib * mat_b;
    S* C = out.data() + ob * mat_o;
    for (std::size_t i = 0; i < M; ++i) {
      const S* arow = A + i * K;
      S* crow = C + i * N;
      for (std::size_t k = 0; k < K; ++k) {
        const S aik = arow[k];
        const S* brow = B + k * N;
        for (std::size_t j = 0; j < N; ++j) crow[j] += aik * brow[j];
      }
    }
  });

  auto an = a.node();
  auto bn = b.node();
  return detail::make_result<S>(
      out_shape, std::move(out), {a, b}, [plan, an, bn, M, K, N](TensorNode<S>& node) {
        const std::size_t mat_a = M * K, mat_b = K * N, mat_o = M * N;
        const bool need_a = an->requires_grad, need_b = bn->requires_grad;
        if (need_a) an->ensure_grad();
        if (need_b) bn->ensure_grad();
        const S* g = node.grad.data();
        const S* av = an->value.data();
        const S* bv = bn->value.data();
        detail::for_each_pair(plan, [&](std::size_t ob, std::size_t ia, std::size_t ib) {
          const S* G = g + ob * mat_o;
          if (need_a) {
            // dA[i,k] += sum_j G[i,j] * B[k,j]
            const S* B = bv + ib * mat_b;
            S* dA = an->grad.data() + ia * mat_a;
            for (std::size_t i = 0; i < M; ++i) {
              const S* grow = G + i * N;
              S* darow = dA + i * K;
              for (std::size_t k = 0; k < K; ++k) {
                const S* brow = B + k * N;
                S acc = S(0);
                for (std::size_t j = 0; j < N; ++j) acc += grow[j] * brow[j];
                darow[k] += acc;
              }
            }
          }
          if (need_b) {
            // dB[k,j] += sum_i A[i,k] * G[i,j]
            const S* A = av + ia * mat_a;
            S* dB = bn->grad.data() + ib * mat_b;
            for (std::size_t i = 0; i < M; ++i) {
              const S* arow = A + i * K;
              const S* grow = G + i * N;
              for (std::size_t k = 0; k < K; ++k) {
                const S aik = arow[k];
                S* dbrow = dB + k * N;
                for (std::size_t j = 0; j < N; ++j) dbrow[j] += aik * grow[j];
              }
            }
          }
        });
      });
}

// ---------------------------------------------------------------------------
// Softmax along an axis, stabilized by max subtraction.
// ---------------------------------------------------------------------------

namespace detail {
struct AxisSpan {
  std::size_t outer = 1, len = 1, inner = 1;
};
inline AxisSpan axis_span(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size())
    shape_error(op, "axis " + std::to_string(axis) + " out of range for shape " +
                        shape_to_string(shape));
  AxisSpan s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}
}  // namespace detail

template <typename S>
TensorT<S> softmax(const TensorT<S>& x, std::size_t axis) {
  const auto span = detail::axis_span(x.shape(), axis, "softmax");
  std::vector<S> out(x.size());
  const S* xv = x.values().data();
  const S neg_inf = -std::numeric_limits<S>::infinity();
  for (std::size_t o = 0; o < span.outer; ++o) {
    for (std::size_t in = 0; in < span.inner; ++in) {
      const std::size_t base = o * span.len * span.inner + in;
      S maxv = neg_inf;
      for (std::size_t t = 0; t < span.len; ++t)
        maxv = std::max(maxv, xv[base + t * span.inner]);
      if (maxv == neg_inf)
        throw std::runtime_error("softmax: slice has no finite entries");
      S sum = S(0);
      for (std::size_t t = 0; t < span.len; ++t) {
        const S e = std::exp(xv[base + t * span.inner] - maxv);
        out[base + t * span.inner] = e;
        sum += e;
      }
      const S inv = S(1) / sum;
      for (std::size_t t = 0; t < span.len; ++t) out[base + t * span.inner] *= inv;
    }
  }
  auto xn = x.node();
  return detail::make_result<S>(x.shape(), std::move(out), {x}, [xn, span](TensorNode<S>& node) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const S* g = node.grad.data();
    const S* y = node.value.data();
    S* gx = xn->grad.data();
    for (std::size_t o = 0; o < span.outer; ++o) {
      for (std::size_t in = 0; in < span.inner; ++in) {
        const std::size_t base = o * span.len * span.inner + in;
        S dsum = S(0);
        for (std::size_t t = 0; t < span.len; ++t) {
          const std::size_t k = base + t * span.inner;
          dsum += g[k] * y[k];
        }
        for (std::size_t t = 0; t < span.len; ++t) {
          const std::size_t k = base + t * span.inner;
          gx[k] += y[k] * (g[k] - dsum);
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

enum class Reduce { kSum, kMean };

template <typename S>
TensorT<S> reduce_axis(const TensorT<S>& x, Reduce op, std::size_t axis, bool keepdim) {
  const auto span = detail::axis_span(x.shape(), axis, "reduce");
  Shape out_shape = x.shape();
  if (keepdim)
    out_shape[axis] = 1;
  else
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<S> out(span.outer * span.inner, S(0));
  const S* xv = x.values().data();
  for (std::size_t o = 0; o < span.outer; ++o) {
    for (std::size_t t = 0; t < span.len; ++t) {
      const std::size_t base = (o * span.len + t) * span.inner;
      S* orow = out.data() + o * span.inner;
      for (std::size_t in = 0; in < span.inner; ++in) orow[in] += xv[base + in];
    }
  }
  const S denom = op == Reduce::kMean ? S(span.len) : S(1);
  if (op == Reduce::kMean)
    for (auto& v : out) v /= denom;
  auto xn = x.node();
  return detail::make_result<S>(
      out_shape, std::move(out), {x}, [xn, span, denom](TensorNode<S>& node) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const S* g = node.grad.data();
        S* gx = xn->grad.data();
        for (std::size_t o = 0; o < span.outer; ++o) {
          for (std::size_t t = 0; t < span.len; ++t) {
            const std::size_t base = (o * span.len + t) * span.inner;
            const S* grow = g + o * span.inner;
            for (std::size_t in = 0; in < span.inner; ++in) gx[base + in] += grow[in] / denom;
          }
        }
      });
}

template <typename S>
TensorT<S> reduce_all(const TensorT<S>& x, Reduce op) {
  S acc = S(0);
  for (S v : x.values()) acc += v;
  const S denom = op == Reduce::kMean ? S(x.size()) : S(1);
  if (op == Reduce::kMean) acc /= denom;
  auto xn = x.node();
  return detail::make_result<S>(Shape{}, {acc}, {x}, [xn, denom](TensorNode<S>& node) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const S g = node.grad[0];
    for (auto& gv : xn->grad) gv += g / denom;
  });
}

template <typename S>
TensorT<S> sum_axis(const TensorT<S>& x, std::size_t axis, bool keepdim = false) {
  return reduce_axis(x, Reduce::kSum, axis, keepdim);
}
template <typename S>
TensorT<S> mean_axis(const TensorT<S>& x, std::size_t axis, bool keepdim = false) {
  return reduce_axis(x, Reduce::kMean, axis, keepdim);
}
template <typename S>
TensorT<S> sum_all(const TensorT<S>& x) { return reduce_all(x, Reduce::kSum); }
template <typename S>
TensorT<S> mean_all(const TensorT<S>& x) { return reduce_all(x, Reduce::kMean); }

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> reshape(const TensorT<S>& x, Shape new_shape) {
  if (numel(new_shape) != x.size())
    shape_error("reshape", "cannot view " + shape_to_string(x.shape()) + " as " +
                               shape_to_string(new_shape));
  auto xn = x.node();
  return detail::make_result<S>(std::move(new_shape), x.values(), {x},
                                [xn](TensorNode<S>& node) {
                                  if (!xn->requires_grad) return;
                                  xn->ensure_grad();
                                  for (std::size_t i = 0; i < node.grad.size(); ++i)
                                    xn->grad[i] += node.grad[i];
                                });
}

namespace detail {
// Copies src (with shape `src_shape`) into dst with axes a0/a1 swapped.
// When accumulate is true, adds instead of assigning.
template <typename S>
void transpose_copy(const S* src, const Shape& src_shape, std::size_t a0, std::size_t a1, S* dst,
                    bool accumulate) {
  Shape dst_shape = src_shape;
  std::swap(dst_shape[a0], dst_shape[a1]);
  const auto dst_str = natural_strides(dst_shape);
  auto src_to_dst = natural_strides(src_shape);
  // Stride in the destination for a step along each source axis.
  std::vector<std::size_t> step(src_shape.size());
  for (std::size_t d = 0; d < src_shape.size(); ++d) {
    std::size_t dd = d == a0 ? a1 : d == a1 ? a0 : d;
    step[d] = dst_str[dd];
  }
  const std::size_t count = numel(src_shape);
  std::vector<std::size_t> idx(src_shape.size(), 0);
  std::size_t doff = 0;
  for (std::size_t i = 0; i < count; ++i) {
    if (accumulate)
      dst[doff] += src[i];
    else
      dst[doff] = src[i];
    for (std::size_t d = src_shape.size(); d-- > 0;) {
      ++idx[d];
      doff += step[d];
      if (idx[d] < src_shape[d]) break;
      idx[d] = 0;
      doff -= step[d] * src_shape[d];
    }
  }
}
}  // namespace detail

template <typename S>
TensorT<S> transpose(const TensorT<S>& x, std::size_t a0, std::size_t a1) {
  if (a0 >= x.rank() || a1 >= x.rank())
    shape_error("transpose", "axes out of range for " + shape_to_string(x.shape()));
  Shape out_shape = x.shape();
  std::swap(out_shape[a0], out_shape[a1]);
  std::vector<S> out(x.size());
  detail::transpose_copy(x.values().data(), x.shape(), a0, a1, out.data(), false);
  auto xn = x.node();
  Shape in_shape = x.shape();
  return detail::make_result<S>(std::move(out_shape), std::move(out), {x},
                                [xn, a0, a1](TensorNode<S>& node) {
                                  if (!xn->requires_grad) return;
                                  xn->ensure_grad();
                                  detail::transpose_copy(node.grad.data(), node.shape, a0, a1,
                                                         xn->grad.data(), true);
                                });
}

template <typename S>
TensorT<S> slice(const TensorT<S>& x, std::size_t axis, std::size_t start, std::size_t len) {
  const auto span = detail::axis_span(x.shape(), axis, "slice");
  if (start + len > span.len)
    shape_error("slice", "range [" + std::to_string(start) + "," + std::to_string(start + len) +
                             ") exceeds axis extent " + std::to_string(span.len));
  Shape out_shape = x.shape();
  out_shape[axis] = len;
  std::vector<S> out(numel(out_shape));
  const S* xv = x.values().data();
  for (std::size_t o = 0; o < span.outer; ++o) {
    const S* src = xv + (o * span.len + start) * span.inner;
    S* dst = out.data() + o * len * span.inner;
    std::copy(src, src + len * span.inner, dst);
  }
  auto xn = x.node();
  return detail::make_result<S>(std::move(out_shape), std::move(out), {x},
                                [xn, span, start, len](TensorNode<S>& node) {
                                  if (!xn->requires_grad) return;
                                  xn->ensure_grad();
                                  const S* g = node.grad.data();
                                  for (std::size_t o = 0; o < span.outer; ++o) {
                                    S* dst = xn->grad.data() + (o * span.len + start) * span.inner;
                                    const S* src = g + o * len * span.inner;
                                    for (std::size_t i = 0; i < len * span.inner; ++i)
                                      dst[i] += src[i];
                                  }
                                });
}

template <typename S>
TensorT<S> concat(const std::vector<TensorT<S>>& parts, std::size_t axis) {
  if (parts.empty()) shape_error("concat", "no inputs");
  const Shape& ref = parts[0].shape();
  if (axis >= ref.size()) shape_error("concat", "axis out of range");
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != ref.size()) shape_error("concat", "rank mismatch");
    for (std::size_t d = 0; d < ref.size(); ++d)
      if (d != axis && p.shape()[d] != ref[d])
        shape_error("concat", "shape mismatch " + shape_to_string(p.shape()) + " vs " +
                                  shape_to_string(ref));
    total += p.shape()[axis];
  }
  Shape out_shape = ref;
  out_shape[axis] = total;
  const auto span = detail::axis_span(out_shape, axis, "concat");
  std::vector<S> out(numel(out_shape));
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t plen = p.shape()[axis];
    const S* src = p.values().data();
    for (std::size_t o = 0; o < span.outer; ++o) {
      S* dst = out.data() + (o * total + offset) * span.inner;
      std::copy(src + o * plen * span.inner, src + (o + 1) * plen * span.inner, dst);
    }
    offset += plen;
  }
  std::vector<std::shared_ptr<TensorNode<S>>> pnodes;
  std::vector<std::size_t> lens;
  for (const auto& p : parts) {
    pnodes.push_back(p.node());
    lens.push_back(p.shape()[axis]);
  }
  return detail::make_result<S>(
      std::move(out_shape), std::move(out), parts,
      [pnodes, lens, span, total](TensorNode<S>& node) {
        const S* g = node.grad.data();
        std::size_t offset = 0;
        for (std::size_t pi = 0; pi < pnodes.size(); ++pi) {
          auto& pn = pnodes[pi];
          const std::size_t plen = lens[pi];
          if (pn->requires_grad) {
            pn->ensure_grad();
            for (std::size_t o = 0; o < span.outer; ++o) {
              const S* src = g + (o * total + offset) * span.inner;
              S* dst = pn->grad.data() + o * plen * span.inner;
              for (std::size_t i = 0; i < plen * span.inner; ++i) dst[i] += src[i];
            }
          }
          offset += plen;
        }
      });
}

template <typename S>
TensorT<S> pad_axis(const TensorT<S>& x, std::size_t axis, std::size_t before, std::size_t after) {
  const auto span = detail::axis_span(x.shape(), axis, "pad_axis");
  Shape out_shape = x.shape();
  out_shape[axis] = span.len + before + after;
  std::vector<S> out(numel(out_shape), S(0));
  const S* xv = x.values().data();
  const std::size_t olen = out_shape[axis];
  for (std::size_t o = 0; o < span.outer; ++o) {
    const S* src = xv + o * span.len * span.inner;
    S* dst = out.data() + (o * olen + before) * span.inner;
    std::copy(src, src + span.len * span.inner, dst);
  }
  auto xn = x.node();
  return detail::make_result<S>(std::move(out_shape), std::move(out), {x},
                                [xn, span, before, olen](TensorNode<S>& node) {
                                  if (!xn->requires_grad) return;
                                  xn->ensure_grad();
                                  const S* g = node.grad.data();
                                  for (std::size_t o = 0; o < span.outer; ++o) {
                                    const S* src = g + (o * olen + before) * span.inner;
                                    S* dst = xn->grad.data() + o * span.len * span.inner;
                                    for (std::size_t i = 0; i < span.len * span.inner; ++i)
                                      dst[i] += src[i];
                                  }
                                });
}

// Row gather for embedding tables: table [V, d], ids -> [len(ids), d].
template <typename S>
TensorT<S> gather_rows(const TensorT<S>& table, const std::vector<int>& ids) {
  if (table.rank() != 2) shape_error("gather_rows", "table must be rank 2");
  const std::size_t V = table.shape()[0], d = table.shape()[1];
  for (int id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= V)
      shape_error("gather_rows", "id " + std::to_string(id) + " out of range [0," +
                                     std::to_string(V) + ")");
  std::vector<S> out(ids.size() * d);
  const S* tv = table.values().data();
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy(tv + static_cast<std::size_t>(ids[i]) * d,
              tv + (static_cast<std::size_t>(ids[i]) + 1) * d, out.data() + i * d);
  auto tn = table.node();
  return detail::make_result<S>(Shape{ids.size(), d}, std::move(out), {table},
                                [tn, ids, d](TensorNode<S>& node) {
                                  if (!tn->requires_grad) return;
                                  tn->ensure_grad();
                                  const S* g = node.grad.data();
                                  for (std::size_t i = 0; i < ids.size(); ++i) {
                                    S* dst = tn->grad.data() + static_cast<std::size_t>(ids[i]) * d;
                                    const S* src = g + i * d;
                                    for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
                                  }
                                });
}

// out[i] = mask[i] != 0 ? x[i] : fill. The mask carries no gradient.
template <typename S>
TensorT<S> masked_fill(const TensorT<S>& x, const TensorT<S>& mask, S fill) {
  if (mask.requires_grad()) shape_error("masked_fill", "mask must not require grad");
  auto plan = detail::make_binary_plan(x.shape(), mask.shape(), "masked_fill");
  if (plan.out_shape != x.shape())
    shape_error("masked_fill", "mask " + shape_to_string(mask.shape()) +
                                   " does not broadcast onto " + shape_to_string(x.shape()));
  std::vector<S> out(x.size());
  const S* xv = x.values().data();
  const S* mv = mask.values().data();
  detail::for_each_pair(plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
    out[i] = mv[ib] != S(0) ? xv[ia] : fill;
  });
  auto xn = x.node();
  auto mn = mask.node();
  return detail::make_result<S>(
      x.shape(), std::move(out), {x}, [xn, mn, plan](TensorNode<S>& node) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const S* g = node.grad.data();
        const S* mv = mn->value.data();
        S* gx = xn->grad.data();
        detail::for_each_pair(plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
          if (mv[ib] != S(0)) gx[ia] += g[i];
        });
      });
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

// Masked mean of |pred - target|. Subgradient at ties is 0.
template <typename S>
TensorT<S> l1_loss(const TensorT<S>& pred, const TensorT<S>& target,
                   const TensorT<S>* mask = nullptr) {
  if (pred.shape() != target.shape())
    shape_error("l1_loss", "pred " + shape_to_string(pred.shape()) + " vs target " +
                               shape_to_string(target.shape()));
  detail::BinaryPlan plan;
  if (mask) {
    plan = detail::make_binary_plan(pred.shape(), mask->shape(), "l1_loss");
    if (plan.out_shape != pred.shape())
      shape_error("l1_loss", "mask does not broadcast onto pred");
  }
  const S* pv = pred.values().data();
  const S* tv = target.values().data();
  S num = S(0), den = S(0);
  if (mask) {
    const S* mv = mask->values().data();
    detail::for_each_pair(plan, [&](std::size_t i, std::size_t, std::size_t ib) {
      num += std::abs(pv[i] - tv[i]) * mv[ib];
      den += mv[ib];
    });
  } else {
    for (std::size_t i = 0; i < pred.size(); ++i) num += std::abs(pv[i] - tv[i]);
    den = S(pred.size());
  }
  if (den == S(0)) throw std::runtime_error("l1_loss: mask has empty support");
  std::vector<TensorT<S>> parents{pred, target};
  if (mask) parents.push_back(*mask);
  auto pn = pred.node();
  auto tn = target.node();
  auto mn = mask ? mask->node() : nullptr;
  return detail::make_result<S>(
      Shape{}, {num / den}, parents, [pn, tn, mn, plan, den](TensorNode<S>& node) {
        const S g = node.grad[0] / den;
        const bool need_p = pn->requires_grad, need_t = tn->requires_grad;
        if (need_p) pn->ensure_grad();
        if (need_t) tn->ensure_grad();
        const S* pv = pn->value.data();
        const S* tv = tn->value.data();
        auto contribute = [&](std::size_t i, S m) {
          const S d = pv[i] - tv[i];
          const S s = d > S(0) ? S(1) : d < S(0) ? S(-1) : S(0);
          if (need_p) pn->grad[i] += g * s * m;
          if (need_t) tn->grad[i] -= g * s * m;
        };
        if (mn) {
          const S* mv = mn->value.data();
          detail::for_each_pair(plan, [&](std::size_t i, std::size_t, std::size_t ib) {
            contribute(i, mv[ib]);
          });
        } else {
          for (std::size_t i = 0; i < pn->value.size(); ++i) contribute(i, S(1));
        }
      });
}

template <typename S>
S softplus_stable(S z) {
  // log(1 + e^z) without overflow
  return z > S(0) ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

// Masked mean of the weighted binary cross-entropy on logits:
//   l_i = pos_weight * y_i * softplus(-x_i) + (1 - y_i) * softplus(x_i)
template <typename S>
TensorT<S> bce_with_logits(const TensorT<S>& logits, const TensorT<S>& targets, S pos_weight,
                           const TensorT<S>* mask = nullptr) {
  if (logits.shape() != targets.shape())
    shape_error("bce_with_logits", "logits " + shape_to_string(logits.shape()) + " vs targets " +
                                       shape_to_string(targets.shape()));
  detail::BinaryPlan plan;
  if (mask) {
    plan = detail::make_binary_plan(logits.shape(), mask->shape(), "bce_with_logits");
    if (plan.out_shape != logits.shape())
      shape_error("bce_with_logits", "mask does not broadcast onto logits");
  }
  const S* xv = logits.values().data();
  const S* yv = targets.values().data();
  S num = S(0), den = S(0);
  auto term = [&](std::size_t i) {
    const S x = xv[i], y = yv[i];
    return pos_weight * y * softplus_stable(-x) + (S(1) - y) * softplus_stable(x);
  };
  if (mask) {
    const S* mv = mask->values().data();
    detail::for_each_pair(plan, [&](std::size_t i, std::size_t, std::size_t ib) {
      num += term(i) * mv[ib];
      den += mv[ib];
    });
  } else {
    for (std::size_t i = 0; i < logits.size(); ++i) num += term(i);
    den = S(logits.size());
  }
  if (den == S(0)) throw std::runtime_error("bce_with_logits: mask has empty support");
  std::vector<TensorT<S>> parents{logits, targets};
  if (mask) parents.push_back(*mask);
  auto xn = logits.node();
  auto mn = mask ? mask->node() : nullptr;
  auto yn = targets.node();
  return detail::make_result<S>(
      Shape{}, {num / den}, parents, [xn, yn, mn, plan, den, pos_weight](TensorNode<S>& node) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const S g = node.grad[0] / den;
        const S* xv = xn->value.data();
        const S* yv = yn->value.data();
        auto dloss = [&](std::size_t i) {
          const S x = xv[i], y = yv[i];
          return (S(1) - y) * stable_sigmoid(x) - pos_weight * y * stable_sigmoid(-x);
        };
        if (mn) {
          const S* mv = mn->value.data();
          detail::for_each_pair(plan, [&](std::size_t i, std::size_t, std::size_t ib) {
            xn->grad[i] += g * dloss(i) * mv[ib];
          });
        } else {
          for (std::size_t i = 0; i < xn->value.size(); ++i) xn->grad[i] += g * dloss(i);
        }
      });
}

// Normalizes the last axis to zero mean / unit variance, then applies the
// affine (gamma, beta). Composed from primitive ops so the backward is exact.
template <typename S>
TensorT<S> layer_norm(const TensorT<S>& x, const TensorT<S>& gamma, const TensorT<S>& beta,
                      S eps = S(1e-5)) {
  if (x.rank() == 0) shape_error("layer_norm", "input must have rank >= 1");
  const std::size_t d = x.shape().back();
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d})
    shape_error("layer_norm", "affine shapes " + shape_to_string(gamma.shape()) + "/" +
                                  shape_to_string(beta.shape()) + " do not match feature dim " +
                                  std::to_string(d));
  const std::size_t last = x.rank() - 1;
  auto mu = mean_axis(x, last, true);
  auto centered = sub(x, mu);
  auto var = mean_axis(mul(centered, centered), last, true);
  auto denom = sqrt_op(add_scalar(var, eps));
  auto normed = div(centered, denom);
  return add(mul(normed, gamma), beta);
}

// ---------------------------------------------------------------------------
// backward()
// ---------------------------------------------------------------------------

template <typename S>
void backward(const TensorT<S>& loss) {
  if (loss.size() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got " +
                                shape_to_string(loss.shape()));
  if (!loss.requires_grad()) return;  // no differentiable path anywhere
  using Node = TensorNode<S>;
  // Iterative post-order DFS over the requires_grad subgraph.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, child] = stack.back();
    if (child < node->parents.size()) {
      Node* next = node->parents[child].get();
      ++child;
      if (next->requires_grad && !visited.count(next)) {
        visited.insert(next);
        stack.emplace_back(next, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss.node()->ensure_grad();
  loss.node()->grad[0] = S(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backprop) {
      node->ensure_grad();
      node->backprop(*node);
    }
  }
}

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

}  // namespace lsttts
