// Copyright 2026 The EXPERT Authors.
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

// Reverse-mode automatic differentiation over a dynamically built graph.
//
// Every operation returns a Var that owns its value and, when any input
// requires a gradient, a closure that propagates the output gradient back to
// its inputs. Calling backward() on a scalar Var walks the graph in reverse
// topological order. Parameters are leaf Vars whose gradients accumulate
// across backward calls until zero_grad().
//
// Every op output is checked for NaN/Inf and raises NumericError.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "expert/numeric/tensor.hpp"

namespace expert::ad {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Tensor& grad_buffer() {
    if (grad.empty() && !value.empty()) grad = Tensor::zeros_like(value);
    return grad;
  }
};

namespace detail {
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode()) {
    detail::grad_mode() = false;
  }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return Var(std::move(n));
  }
  static Var parameter(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = true;
    return Var(std::move(n));
  }

  explicit operator bool() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad_buffer(); }
  Tensor& mutable_grad() { return node_->grad_buffer(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }

  Scalar item() const {
    if (node_->value.size() != 1) {
      throw DimensionError("item() on non-scalar " +
                           node_->value.shape_string());
    }
    return node_->value[0];
  }

  void zero_grad() {
    if (!node_->grad.empty()) node_->grad.fill(0);
  }

  // Seeds d(sum of value)/d(value) = 1 and propagates to every ancestor.
  void backward() const {
    if (!node_->requires_grad) return;
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    visited.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        Node* p = n->parents[next++].get();
        if (p->requires_grad && visited.insert(p).second) {
          stack.emplace_back(p, 0);
        }
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    Tensor& seed = node_->grad_buffer();
    for (std::size_t i = 0; i < seed.size(); ++i) seed[i] += 1;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      if (n->backward && !n->grad.empty()) n->backward(*n);
    }
  }

 private:
  std::shared_ptr<Node> node_;
};

namespace detail {

inline void check_finite(const Tensor& t, const char* op) {
  if (!t.all_finite()) {
    throw NumericError(std::string("non-finite value produced by ") + op);
  }
}

inline Var make_result(Tensor value, std::vector<Var> parents,
                       std::function<void(Node&)> backward, const char* op) {
  check_finite(value, op);
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (grad_mode()) {
    for (const auto& p : parents) n->requires_grad |= p.requires_grad();
  }
  if (n->requires_grad) {
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.shared());
    n->backward = std::move(backward);
  }
  return Var(std::move(n));
}

// Gradient buffer of parent i, or nullptr if it needs none.
inline Tensor* parent_grad(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  return p.requires_grad ? &p.grad_buffer() : nullptr;
}

inline void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value())) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         a.value().shape_string() + " vs " +
                         b.value().shape_string());
  }
}

}  // namespace detail

inline Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ " +
                         a.value().shape_string() + " x " +
                         b.value().shape_string());
  }
  Tensor out(a.rows(), b.cols());
  kernels::gemm_nn(a.value(), b.value(), out);
  return detail::make_result(
      std::move(out), {a, b},
      [](Node& self) {
        const Tensor& av = self.parents[0]->value;
        const Tensor& bv = self.parents[1]->value;
        if (Tensor* ga = detail::parent_grad(self, 0))
          kernels::gemm_nt(self.grad, bv, *ga);
        if (Tensor* gb = detail::parent_grad(self, 1))
          kernels::gemm_tn(av, self.grad, *gb);
      },
      "matmul");
}

// a * b^T.
inline Var matmul_nt(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: inner dimensions differ " +
                         a.value().shape_string() + " x " +
                         b.value().shape_string() + "^T");
  }
  Tensor out(a.rows(), b.rows());
  kernels::gemm_nt(a.value(), b.value(), out);
  return detail::make_result(
      std::move(out), {a, b},
      [](Node& self) {
        const Tensor& av = self.parents[0]->value;
        const Tensor& bv = self.parents[1]->value;
        if (Tensor* ga = detail::parent_grad(self, 0))
          kernels::gemm_nn(self.grad, bv, *ga);
        if (Tensor* gb = detail::parent_grad(self, 1))
          kernels::gemm_tn(self.grad, av, *gb);
      },
      "matmul_nt");
}

inline Var transpose(const Var& a) {
  return detail::make_result(
      a.value().transposed(), {a},
      [](Node& self) {
        if (Tensor* ga = detail::parent_grad(self, 0)) {
          for (std::size_t r = 0; r < self.grad.rows(); ++r)
            for (std::size_t c = 0; c < self.grad.cols(); ++c)
              (*ga)(c, r) += self.grad(r, c);
        }
      },
      "transpose");
}

inline Var add(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return detail::make_result(
      std::move(out), {a, b},
      [](Node& self) {
        for (std::size_t k = 0; k < 2; ++k)
          if (Tensor* g = detail::parent_grad(self, k))
            for (std::size_t i = 0; i < g->size(); ++i)
              (*g)[i] += self.grad[i];
      },
      "add");
}

inline Var sub(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return detail::make_result(
      std::move(out), {a, b},
      [](Node& self) {
        if (Tensor* g = detail::parent_grad(self, 0))
          for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
        if (Tensor* g = detail::parent_grad(self, 1))
          for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
      },
      "sub");
}

// Elementwise product.
inline Var mul(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return detail::make_result(
      std::move(out), {a, b},
      [](Node& self) {
        const Tensor& av = self.parents[0]->value;
        const Tensor& bv = self.parents[1]->value;
        if (Tensor* g = detail::parent_grad(self, 0))
          for (std::size_t i = 0; i < g->size(); ++i)
            (*g)[i] += self.grad[i] * bv[i];
        if (Tensor* g = detail::parent_grad(self, 1))
          for (std::size_t i = 0; i < g->size(); ++i)
            (*g)[i] += self.grad[i] * av[i];
      },
      "mul");
}

// Adds a 1 x cols row to every row of a.
inline Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw DimensionError("add_row: row " + row.value().shape_string() +
                         " does not broadcast over " +
                         a.value().shape_string());
  }
  Tensor out = a.value();
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += row.value()[c];
  return detail::make_result(
      std::move(out), {a, row},
      [](Node& self) {
        if (Tensor* g = detail::parent_grad(self, 0))
          for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
        if (Tensor* g = detail::parent_grad(self, 1))
          for (std::size_t r = 0; r < self.grad.rows(); ++r)
            for (std::size_t c = 0; c < self.grad.cols(); ++c)
              (*g)[c] += self.grad(r, c);
      },
      "add_row");
}

inline Var scale(const Var& a, Scalar s) {
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
  return detail::make_result(
      std::move(out), {a},
      [s](Node& self) {
        if (Tensor* g = detail::parent_grad(self, 0))
          for (std::size_t i = 0; i < g->size(); ++i)
            (*g)[i] += s * self.grad[i];
      },
      "scale");
}

inline Var add_scalar(const Var& a, Scalar s) {
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += s;
  return detail::make_result(
      std::move(out), {a},
      [](Node& self) {
        if (Tensor* g = detail::parent_grad(self, 0))
          for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
      },
      "add_scalar");
}

inline Var relu(const Var& a) {
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max<Scalar>(0, out[i]);
  return detail::make_result(
      std::move(out), {a},
      [](Node& self) {
        const Tensor& av = self.parents[0]->value;
        if (Tensor* g = detail::parent_grad(self, 0))
          for (std::size_t i = 0; i < g->size(); ++i)
            if (av[i] > 0) (*g)[i] += self.grad[i];
      },
      "relu");
}

inline constexpr Scalar kInvSqrt2 = 0.7071067811865476;

// Exact gelu: x * Phi(x).
inline Var gelu(const Var& a) {
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Scalar x = out[i];
    out[i] = 0.5 * x * (1 + std::erf(x * kInvSqrt2));
  }
  return detail::make_result(
      std::move(out), {a},
      [](Node& self) {
        const Tensor& av = self.parents[0]->value;
        if (Tensor* g = detail::parent_grad(self, 0)) {
          constexpr Scalar kInvSqrt2Pi = 0.3989422804014327;
          for (std::size_t i = 0; i < g->size(); ++i) {
            const Scalar x = av[i];
            const Scalar cdf = 0.5 * (1 + std::erf(x * kInvSqrt2));
            const Scalar pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
            (*g)[i] += self.grad[i] * (cdf + x * pdf);
          }
        }
      },
      "gelu");
}

inline Var exp(const Var& a) {
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(out[i]);
  return detail::make_result(
      std::move(out), {a},
      [](Node& self) {
        if (Tensor* g = detail::parent_grad(self, 0))
          for (std::size_t i = 0; i < g->size(); ++i)
            (*g)[i] += self.grad[i] * self.value[i];
      },
      "exp");
}

inline Var log(const Var& a) {
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(out[i]);
  return detail::make_result(
      std::move(out), {a},
      [](Node& self) {
        const Tensor& av = self.parents[0]->value;
        if (Tensor* g = detail::parent_grad(self, 0))
          for (std::size_t i = 0; i < g->size(); ++i)
            (*g)[i] += self.grad[i] / av[i];
      },
      "log");
}

inline Var sum(const Var& a) {
  Scalar s = 0;
  for (Scalar v : a.value().values()) s += v;
  return detail::make_result(
      Tensor(1, 1, s), {a},
      [](Node& self) {
        if (Tensor* g = detail::parent_grad(self, 0))
          for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[0];
      },
      "sum");
}

inline Var mean(const Var& a) {
  if (a.value().empty()) throw DimensionError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<Scalar>(a.value().size()));
}

// Sum of 1 x 1 scalars.
inline Var add_all(const std::vector<Var>& terms) {
  if (terms.empty()) throw DimensionError("add_all of no terms");
  Var acc = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
  return acc;
}

// Binary matrix used for attention masks (row = query, col = key).
struct BinaryMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> bits;

  BinaryMatrix() = default;
  BinaryMatrix(std::size_t r, std::size_t c, bool fill = false)
      : rows(r), cols(c), bits(r * c, fill ? 1 : 0) {}
  bool operator()(std::size_t r, std::size_t c) const {
    return bits[r * cols + c] != 0;
  }
  void set(std::size_t r, std::size_t c, bool v) {
    bits[r * cols + c] = v ? 1 : 0;
  }
  friend bool operator==(const BinaryMatrix&, const BinaryMatrix&) = default;
};

namespace detail {

inline void softmax_backward_rows(const Tensor& y, const Tensor& dy,
                                  Scalar inv_scale, Tensor& dx) {
  for (std::size_t r = 0; r < y.rows(); ++r) {
    Scalar dot = 0;
    for (std::size_t c = 0; c < y.cols(); ++c) dot += y(r, c) * dy(r, c);
    for (std::size_t c = 0; c < y.cols(); ++c)
      dx(r, c) += inv_scale * y(r, c) * (dy(r, c) - dot);
  }
}

inline void softmax_inplace_rows(Tensor& z) {
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    const Scalar m = *std::max_element(row.begin(), row.end());
    Scalar total = 0;
    for (Scalar& v : row) {
      v = std::exp(v - m);
      total += v;
    }
    for (Scalar& v : row) v /= total;
  }
}

}  // namespace detail

// Row-wise softmax of x / scale, stabilised by subtracting the row max.
inline Var softmax_rows(const Var& x, Scalar scale = 1) {
  if (!(scale > 0)) throw DimensionError("softmax_rows: scale must be > 0");
  Tensor z = x.value();
  const Scalar inv = 1 / scale;
  for (std::size_t i = 0; i < z.size(); ++i) z[i] *= inv;
  detail::softmax_inplace_rows(z);
  return detail::make_result(
      std::move(z), {x},
      [inv](Node& self) {
        if (Tensor* g = detail::parent_grad(self, 0))
          detail::softmax_backward_rows(self.value, self.grad, inv, *g);
      },
      "softmax_rows");
}

// Masked entries receive a -1e9 logit before the softmax so their weight
// underflows to zero and the unmasked weights renormalise.
inline constexpr Scalar kMaskedLogit = -1e9;

inline Var masked_softmax_rows(const Var& x, const BinaryMatrix& mask,
                               Scalar scale) {
  if (mask.rows != x.rows() || mask.cols != x.cols()) {
    throw DimensionError("masked_softmax_rows: mask shape mismatch");
  }
  if (!(scale > 0)) throw DimensionError("masked_softmax_rows: scale <= 0");
  Tensor z = x.value();
  const Scalar inv = 1 / scale;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    bool any = false;
    for (std::size_t c = 0; c < z.cols(); ++c) {
      z(r, c) *= inv;
      if (mask(r, c)) {
        any = true;
      } else {
        z(r, c) += kMaskedLogit;
      }
    }
    if (!any) {
      throw DimensionError("masked_softmax_rows: row " + std::to_string(r) +
                           " has no unmasked key");
    }
  }
  detail::softmax_inplace_rows(z);
  return detail::make_result(
      std::move(z), {x},
      [inv](Node& self) {
        if (Tensor* g = detail::parent_grad(self, 0))
          detail::softmax_backward_rows(self.value, self.grad, inv, *g);
      },
      "masked_softmax_rows");
}

// -sum_r sum_c target(r,c) * log softmax(logits)(r,c). Rows of target must be
// probability vectors.
inline Var cross_entropy(const Var& logits, const Tensor& target) {
  if (!logits.value().same_shape(target)) {
    throw DimensionError("cross_entropy: target shape mismatch");
  }
  for (std::size_t r = 0; r < target.rows(); ++r) {
    Scalar s = 0;
    for (std::size_t c = 0; c < target.cols(); ++c) {
      if (target(r, c) < 0) {
        throw std::invalid_argument("cross_entropy: negative target entry");
      }
      s += target(r, c);
    }
    if (std::abs(s - 1) > 1e-6) {
      throw std::invalid_argument("cross_entropy: target row " +
                                  std::to_string(r) + " sums to " +
                                  std::to_string(s));
    }
  }
  Tensor probs = logits.value();
  detail::softmax_inplace_rows(probs);
  Scalar loss = 0;
  const Tensor& x = logits.value();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    const Scalar m = *std::max_element(row.begin(), row.end());
    Scalar total = 0;
    for (Scalar v : row) total += std::exp(v - m);
    const Scalar lse = m + std::log(total);
    for (std::size_t c = 0; c < x.cols(); ++c)
      loss += target(r, c) * (lse - x(r, c));
  }
  return detail::make_result(
      Tensor(1, 1, loss), {logits},
      [probs = std::move(probs), target](Node& self) {
        if (Tensor* g = detail::parent_grad(self, 0)) {
          const Scalar up = self.grad[0];
          for (std::size_t i = 0; i < g->size(); ++i)
            (*g)[i] += up * (probs[i] - target[i]);
        }
      },
      "cross_entropy");
}

// log(sum(exp(x))) over every entry.
inline Var logsumexp(const Var& x) {
  const auto vals = x.value().values();
  if (vals.empty()) throw DimensionError("logsumexp of empty tensor");
  const Scalar m = *std::max_element(vals.begin(), vals.end());
  Scalar total = 0;
  for (Scalar v : vals) total += std::exp(v - m);
  const Scalar lse = m + std::log(total);
  return detail::make_result(
      Tensor(1, 1, lse), {x},
      [lse](Node& self) {
        const Tensor& xv = self.parents[0]->value;
        if (Tensor* g = detail::parent_grad(self, 0))
          for (std::size_t i = 0; i < g->size(); ++i)
            (*g)[i] += self.grad[0] * std::exp(xv[i] - lse);
      },
      "logsumexp");
}

// Per-row layer normalisation with learned gain and bias (both 1 x cols).
inline Var layer_norm(const Var& x, const Var& gain, const Var& bias,
                      Scalar eps = 1e-5) {
  const std::size_t n = x.rows(), d = x.cols();
  if (gain.rows() != 1 || gain.cols() != d || bias.rows() != 1 ||
      bias.cols() != d) {
    throw DimensionError("layer_norm: gain/bias shape mismatch");
  }
  Tensor xhat(n, d);
  std::vector<Scalar> inv_std(n);
  Tensor out(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    Scalar mu = 0;
    for (std::size_t c = 0; c < d; ++c) mu += x.value()(r, c);
    mu /= static_cast<Scalar>(d);
    Scalar var = 0;
    for (std::size_t c = 0; c < d; ++c) {
      const Scalar t = x.value()(r, c) - mu;
      var += t * t;
    }
    var /= static_cast<Scalar>(d);
    inv_std[r] = 1 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) {
      xhat(r, c) = (x.value()(r, c) - mu) * inv_std[r];
      out(r, c) = gain.value()[c] * xhat(r, c) + bias.value()[c];
    }
  }
  return detail::make_result(
      std::move(out), {x, gain, bias},
      [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        const std::size_t n = xhat.rows(), d = xhat.cols();
        const Tensor& gv = self.parents[1]->value;
        const Tensor& dy = self.grad;
        if (Tensor* gx = detail::parent_grad(self, 0)) {
          for (std::size_t r = 0; r < n; ++r) {
            Scalar mean_dxh = 0, mean_dxh_xh = 0;
            for (std::size_t c = 0; c < d; ++c) {
              const Scalar dxh = dy(r, c) * gv[c];
              mean_dxh += dxh;
              mean_dxh_xh += dxh * xhat(r, c);
            }
            mean_dxh /= static_cast<Scalar>(d);
            mean_dxh_xh /= static_cast<Scalar>(d);
            for (std::size_t c = 0; c < d; ++c) {
              const Scalar dxh = dy(r, c) * gv[c];
              (*gx)(r, c) +=
                  inv_std[r] * (dxh - mean_dxh - xhat(r, c) * mean_dxh_xh);
            }
          }
        }
        if (Tensor* gg = detail::parent_grad(self, 1))
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < d; ++c)
              (*gg)[c] += dy(r, c) * xhat(r, c);
        if (Tensor* gb = detail::parent_grad(self, 2))
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < d; ++c) (*gb)[c] += dy(r, c);
      },
      "layer_norm");
}

// out[i] = table[ids[i]].
inline Var gather_rows(const Var& table, std::vector<std::size_t> ids) {
  const std::size_t d = table.cols();
  Tensor out(ids.size(), d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= table.rows()) {
      throw DimensionError("gather_rows: index " + std::to_string(ids[i]) +
                           " out of range for " +
                           table.value().shape_string());
    }
    std::copy_n(table.value().data() + ids[i] * d, d, out.data() + i * d);
  }
  return detail::make_result(
      std::move(out), {table},
      [ids = std::move(ids)](Node& self) {
        if (Tensor* g = detail::parent_grad(self, 0)) {
          const std::size_t d = g->cols();
          for (std::size_t i = 0; i < ids.size(); ++i)
            for (std::size_t c = 0; c < d; ++c)
              (*g)(ids[i], c) += self.grad(i, c);
        }
      },
      "gather_rows");
}

// 1 x n row -> 1 x m row of the selected columns.
inline Var take_cols(const Var& x, std::vector<std::size_t> cols) {
  if (x.rows() != 1) throw DimensionError("take_cols expects a row vector");
  Tensor out(1, cols.size());
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (cols[i] >= x.cols()) throw DimensionError("take_cols: out of range");
    out[i] = x.value()[cols[i]];
  }
  return detail::make_result(
      std::move(out), {x},
      [cols = std::move(cols)](Node& self) {
        if (Tensor* g = detail::parent_grad(self, 0))
          for (std::size_t i = 0; i < cols.size(); ++i)
            (*g)[cols[i]] += self.grad[i];
      },
      "take_cols");
}

// A block of rows placed at explicit destination rows.
struct RowPlacement {
  Var rows;
  std::vector<std::size_t> destination;
};

// Builds an n x d tensor by adding each placement's rows at its destinations.
inline Var scatter_rows(std::size_t n, std::size_t d,
                        std::vector<RowPlacement> parts) {
  Tensor out(n, d);
  std::vector<Var> parents;
  std::vector<std::vector<std::size_t>> dests;
  for (auto& p : parts) {
    if (p.rows.rows() != p.destination.size() || p.rows.cols() != d) {
      throw DimensionError("scatter_rows: placement shape mismatch");
    }
    for (std::size_t i = 0; i < p.destination.size(); ++i) {
      if (p.destination[i] >= n) throw DimensionError("scatter_rows: range");
      for (std::size_t c = 0; c < d; ++c)
        out(p.destination[i], c) += p.rows.value()(i, c);
    }
    parents.push_back(p.rows);
    dests.push_back(std::move(p.destination));
  }
  return detail::make_result(
      std::move(out), std::move(parents),
      [dests = std::move(dests)](Node& self) {
        for (std::size_t k = 0; k < dests.size(); ++k) {
          if (Tensor* g = detail::parent_grad(self, k)) {
            const std::size_t d = g->cols();
            for (std::size_t i = 0; i < dests[k].size(); ++i)
              for (std::size_t c = 0; c < d; ++c)
                (*g)(i, c) += self.grad(dests[k][i], c);
          }
        }
      },
      "scatter_rows");
}

inline Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows of nothing");
  const std::size_t d = parts.front().cols();
  std::size_t n = 0;
  for (const auto& p : parts) {
    if (p.cols() != d) throw DimensionError("concat_rows: column mismatch");
    n += p.rows();
  }
  Tensor out(n, d);
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy_n(p.value().data(), p.value().size(), out.data() + off * d);
    off += p.rows();
  }
  return detail::make_result(
      std::move(out), parts,
      [](Node& self) {
        const std::size_t d = self.grad.cols();
        std::size_t off = 0;
        for (std::size_t k = 0; k < self.parents.size(); ++k) {
          const std::size_t rows = self.parents[k]->value.rows();
          if (Tensor* g = detail::parent_grad(self, k))
            for (std::size_t i = 0; i < rows * d; ++i)
              (*g)[i] += self.grad[off * d + i];
          off += rows;
        }
      },
      "concat_rows");
}

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols of nothing");
  const std::size_t n = parts.front().rows();
  std::size_t d = 0;
  for (const auto& p : parts) {
    if (p.rows() != n) throw DimensionError("concat_cols: row mismatch");
    d += p.cols();
  }
  Tensor out(n, d);
  std::size_t off = 0;
  for (const auto& p : parts) {
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < p.cols(); ++c)
        out(r, off + c) = p.value()(r, c);
    off += p.cols();
  }
  return detail::make_result(
      std::move(out), parts,
      [](Node& self) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < self.parents.size(); ++k) {
          const std::size_t w = self.parents[k]->value.cols();
          if (Tensor* g = detail::parent_grad(self, k))
            for (std::size_t r = 0; r < g->rows(); ++r)
              for (std::size_t c = 0; c < w; ++c)
                (*g)(r, c) += self.grad(r, off + c);
          off += w;
        }
      },
      "concat_cols");
}

// Columns [begin, end).
inline Var slice_cols(const Var& x, std::size_t begin, std::size_t end) {
  if (begin >= end || end > x.cols()) throw DimensionError("slice_cols range");
  const std::size_t w = end - begin;
  Tensor out(x.rows(), w);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < w; ++c) out(r, c) = x.value()(r, begin + c);
  return detail::make_result(
      std::move(out), {x},
      [begin](Node& self) {
        if (Tensor* g = detail::parent_grad(self, 0))
          for (std::size_t r = 0; r < self.grad.rows(); ++r)
            for (std::size_t c = 0; c < self.grad.cols(); ++c)
              (*g)(r, begin + c) += self.grad(r, c);
      },
      "slice_cols");
}

// Cosine similarity of every row of a against every row of b (m x n).
inline Var cosine_similarity(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) throw DimensionError("cosine: width mismatch");
  constexpr Scalar kEps = 1e-12;
  const std::size_t m = a.rows(), n = b.rows();
  std::vector<Scalar> na(m), nb(n);
  for (std::size_t i = 0; i < m; ++i) {
    Scalar s = kEps;
    for (Scalar v : a.value().row(i)) s += v * v;
    na[i] = std::sqrt(s);
  }
  for (std::size_t j = 0; j < n; ++j) {
    Scalar s = kEps;
    for (Scalar v : b.value().row(j)) s += v * v;
    nb[j] = std::sqrt(s);
  }
  Tensor out(m, n);
  kernels::gemm_nt(a.value(), b.value(), out);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) /= na[i] * nb[j];
  return detail::make_result(
      std::move(out), {a, b},
      [na = std::move(na), nb = std::move(nb)](Node& self) {
        const Tensor& av = self.parents[0]->value;
        const Tensor& bv = self.parents[1]->value;
        const std::size_t m = av.rows(), n = bv.rows(), d = av.cols();
        Tensor* ga = detail::parent_grad(self, 0);
        Tensor* gb = detail::parent_grad(self, 1);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) {
            const Scalar up = self.grad(i, j);
            if (up == 0) continue;
            const Scalar cos = self.value(i, j);
            const Scalar inv = 1 / (na[i] * nb[j]);
            for (std::size_t c = 0; c < d; ++c) {
              if (ga)
                (*ga)(i, c) += up * (bv(j, c) * inv -
                                     cos * av(i, c) / (na[i] * na[i]));
              if (gb)
                (*gb)(j, c) += up * (av(i, c) * inv -
                                     cos * bv(j, c) / (nb[j] * nb[j]));
            }
          }
        }
      },
      "cosine_similarity");
}

// Per-query list of admissible keys, in increasing key order.
struct SparsePattern {
  std::vector<std::vector<std::size_t>> keys;
};

// Multi-head attention evaluated only over admissible (query, key) pairs.
// q, k, v are n x d; head h uses columns [h*d/heads, (h+1)*d/heads). Returns
// the concatenated per-head outputs, n x d. The work done is proportional to
// the number of admissible pairs.
inline Var sparse_attention(const Var& q, const Var& k, const Var& v,
                            std::size_t heads, const SparsePattern& pattern,
                            Scalar scale) {
  const std::size_t n = q.rows(), d = q.cols();
  if (k.rows() != n || v.rows() != n || k.cols() != d || v.cols() != d) {
    throw DimensionError("sparse_attention: q/k/v shape mismatch");
  }
  if (heads == 0 || d % heads != 0) {
    throw DimensionError("sparse_attention: heads must divide width");
  }
  if (pattern.keys.size() != n) {
    throw DimensionError("sparse_attention: pattern size mismatch");
  }
  const std::size_t dh = d / heads;
  const Scalar inv = 1 / scale;
  // probs[h][i][t] is the weight of key pattern.keys[i][t].
  std::vector<std::vector<std::vector<Scalar>>> probs(
      heads, std::vector<std::vector<Scalar>>(n));
  Tensor out(n, d);
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& keys = pattern.keys[i];
      if (keys.empty()) {
        throw DimensionError("sparse_attention: query " + std::to_string(i) +
                             " has no admissible key");
      }
      auto& p = probs[h][i];
      p.resize(keys.size());
      Scalar m = -std::numeric_limits<Scalar>::infinity();
      for (std::size_t t = 0; t < keys.size(); ++t) {
        Scalar s = 0;
        for (std::size_t c = 0; c < dh; ++c)
          s += qv(i, off + c) * kv(keys[t], off + c);
        p[t] = s * inv;
        m = std::max(m, p[t]);
      }
      Scalar total = 0;
      for (Scalar& x : p) {
        x = std::exp(x - m);
        total += x;
      }
      for (Scalar& x : p) x /= total;
      for (std::size_t t = 0; t < keys.size(); ++t)
        for (std::size_t c = 0; c < dh; ++c)
          out(i, off + c) += p[t] * vv(keys[t], off + c);
    }
  }
  return detail::make_result(
      std::move(out), {q, k, v},
      [probs = std::move(probs), pattern, heads, dh, inv](Node& self) {
        const Tensor& qv = self.parents[0]->value;
        const Tensor& kv = self.parents[1]->value;
        const Tensor& vv = self.parents[2]->value;
        Tensor* gq = detail::parent_grad(self, 0);
        Tensor* gk = detail::parent_grad(self, 1);
        Tensor* gv = detail::parent_grad(self, 2);
        const Tensor& dy = self.grad;
        std::vector<Scalar> dp;
        for (std::size_t h = 0; h < heads; ++h) {
          const std::size_t off = h * dh;
          for (std::size_t i = 0; i < pattern.keys.size(); ++i) {
            const auto& keys = pattern.keys[i];
            const auto& p = probs[h][i];
            dp.assign(keys.size(), 0);
            Scalar dot = 0;
            for (std::size_t t = 0; t < keys.size(); ++t) {
              Scalar s = 0;
              for (std::size_t c = 0; c < dh; ++c)
                s += dy(i, off + c) * vv(keys[t], off + c);
              dp[t] = s;
              dot += p[t] * s;
              if (gv)
                for (std::size_t c = 0; c < dh; ++c)
                  (*gv)(keys[t], off + c) += p[t] * dy(i, off + c);
            }
            for (std::size_t t = 0; t < keys.size(); ++t) {
              const Scalar ds = p[t] * (dp[t] - dot) * inv;
              if (ds == 0) continue;
              for (std::size_t c = 0; c < dh; ++c) {
                if (gq) (*gq)(i, off + c) += ds * kv(keys[t], off + c);
                if (gk) (*gk)(keys[t], off + c) += ds * qv(i, off + c);
              }
            }
          }
        }
      },
      "sparse_attention");
}

}  // namespace expert::ad
