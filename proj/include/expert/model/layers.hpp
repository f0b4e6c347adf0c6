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

#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "expert/numeric/autodiff.hpp"

namespace expert::model {

using ad::Var;

struct NamedParameter {
  std::string name;
  Var var;
};

// y = x W^T (+ b). weight is out x in, bias 1 x out.
struct Linear {
  Var weight;
  Var bias;

  Var operator()(const Var& x) const {
    Var y = ad::matmul_nt(x, weight);
    return bias ? ad::add_row(y, bias) : y;
  }
  std::size_t in_features() const { return weight.cols(); }
  std::size_t out_features() const { return weight.rows(); }

  void collect(const std::string& prefix,
               std::vector<NamedParameter>& out) const {
    out.push_back({prefix + ".weight", weight});
    if (bias) out.push_back({prefix + ".bias", bias});
  }
};

struct LayerNorm {
  Var gain;
  Var bias;
  Var operator()(const Var& x) const { return ad::layer_norm(x, gain, bias); }
  void collect(const std::string& prefix,
               std::vector<NamedParameter>& out) const {
    out.push_back({prefix + ".gain", gain});
    out.push_back({prefix + ".bias", bias});
  }
};

template <class Rng>
Tensor uniform_tensor(std::size_t rows, std::size_t cols, double bound,
                      Rng& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor t(rows, cols);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

// Glorot-uniform weight, zero bias.
template <class Rng>
Linear make_linear(std::size_t in, std::size_t out, bool with_bias, Rng& rng) {
  Linear l;
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  l.weight = Var::parameter(uniform_tensor(out, in, bound, rng));
  if (with_bias) l.bias = Var::parameter(Tensor(1, out));
  return l;
}

inline LayerNorm make_layer_norm(std::size_t d) {
  return {Var::parameter(Tensor(1, d, 1.0)), Var::parameter(Tensor(1, d))};
}

}  // namespace expert::model
