// Copyright 2026 The pillarkit Authors
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

#include "pillarkit/optimizer.hpp"

#include <cmath>
#include <string>

#include "pillarkit/error.hpp"

namespace pillarkit {

void optimizer_step(OptimizerState& state,
                    std::span<const std::span<double>> params,
                    std::span<const std::span<const double>> grads) {
  require(params.size() == grads.size(),
          "optimizer got " + std::to_string(params.size()) +
              " parameter tensors and " + std::to_string(grads.size()) +
              " gradients");
  for (std::size_t t = 0; t < params.size(); ++t) {
    require(params[t].size() == grads[t].size(),
            "gradient " + std::to_string(t) + " does not match its parameter");
    for (std::size_t i = 0; i < grads[t].size(); ++i) {
      if (!std::isfinite(grads[t][i])) {
        fail(ErrorKind::kDivergence,
             "non-finite gradient in tensor " + std::to_string(t) +
                 " at index " + std::to_string(i) + " (step " +
                 std::to_string(state.step) + ")");
      }
    }
  }

  if (state.algorithm == OptimizerKind::kSgd) {
    for (std::size_t t = 0; t < params.size(); ++t) {
      for (std::size_t i = 0; i < params[t].size(); ++i) {
        params[t][i] -= state.learning_rate * grads[t][i];
      }
    }
    ++state.step;
    return;
  }

  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.size(), 0.0);
      state.second_moment.emplace_back(p.size(), 0.0);
    }
  }
  require(state.first_moment.size() == params.size() &&
              state.second_moment.size() == params.size(),
          "optimizer moments do not match the parameter list");
  for (std::size_t t = 0; t < params.size(); ++t) {
    require(state.first_moment[t].size() == params[t].size() &&
                state.second_moment[t].size() == params[t].size(),
            "optimizer moment " + std::to_string(t) + " has the wrong shape");
  }

  const double t = static_cast<double>(state.step + 1);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& m = state.first_moment[p];
    auto& v = state.second_moment[p];
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      const double g = grads[p][i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      params[p][i] -=
          state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
  ++state.step;
}

std::vector<std::span<double>> parameter_tensors(DescriptorParams& params,
                                                 bool include_weights) {
  std::vector<std::span<double>> out;
  for (auto& l : params.mlp.layers) {
    out.emplace_back(l.weight);
    out.emplace_back(l.bias);
  }
  if (include_weights) out.emplace_back(params.weights.values);
  return out;
}

std::vector<std::span<const double>> gradient_tensors(const Gradients& grads,
                                                      bool include_weights) {
  std::vector<std::span<const double>> out;
  for (const auto& l : grads.layers) {
    out.emplace_back(l.weight);
    out.emplace_back(l.bias);
  }
  if (include_weights) out.emplace_back(grads.weights);
  return out;
}

}  // namespace pillarkit
