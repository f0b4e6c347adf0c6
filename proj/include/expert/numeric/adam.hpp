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
#include <cstdint>
#include <string>
#include <vector>

#include "expert/numeric/autodiff.hpp"
#include "expert/numeric/tensor.hpp"

namespace expert {

struct AdamConfig {
  double learning_rate = 3e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-4;
};

// Learning rate the original optimisation schedule used; desk-scale runs
// default to a larger rate (see TrainConfig).
inline constexpr double kReferenceLearningRate = 3e-5;
inline constexpr double kReferenceAdamEpsilon = 1e-4;

struct AdamState {
  AdamConfig config;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::int64_t step = 0;

  AdamState() = default;
  explicit AdamState(AdamConfig c) : config(c) {}
};

// One bias-corrected Adam update. Moment buffers are allocated on the first
// call and must keep matching the parameter shapes afterwards.
inline void adam_step(const std::vector<Tensor*>& params,
                      const std::vector<const Tensor*>& grads,
                      AdamState& state) {
  if (params.size() != grads.size()) {
    throw DimensionError("adam_step: parameter/gradient count mismatch");
  }
  if (state.first_moment.empty()) {
    for (const Tensor* p : params) {
      state.first_moment.push_back(Tensor::zeros_like(*p));
      state.second_moment.push_back(Tensor::zeros_like(*p));
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw DimensionError("adam_step: state holds " +
                         std::to_string(state.first_moment.size()) +
                         " moments for " + std::to_string(params.size()) +
                         " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(*grads[i]) ||
        !params[i]->same_shape(state.first_moment[i])) {
      throw DimensionError("adam_step: shape mismatch for parameter " +
                           std::to_string(i));
    }
    if (!grads[i]->all_finite()) {
      throw NumericError("adam_step: non-finite gradient for parameter " +
                         std::to_string(i) + " at step " +
                         std::to_string(state.step + 1));
    }
  }
  ++state.step;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1 - std::pow(c.beta1, t);
  const double correction2 = 1 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = *grads[i];
    Tensor& m = state.first_moment[i];
    Tensor& v = state.second_moment[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = c.beta1 * m[j] + (1 - c.beta1) * g[j];
      v[j] = c.beta2 * v[j] + (1 - c.beta2) * g[j] * g[j];
      const double mhat = m[j] / correction1;
      const double vhat = v[j] / correction2;
      p[j] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon);
    }
  }
}

inline void adam_step(std::vector<ad::Var>& params, AdamState& state) {
  std::vector<Tensor*> values;
  std::vector<const Tensor*> grads;
  for (auto& p : params) {
    values.push_back(&p.mutable_value());
    grads.push_back(&p.grad());
  }
  adam_step(values, grads, state);
}

}  // namespace expert
