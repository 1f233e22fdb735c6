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

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pillarkit/autograd.hpp"

namespace pillarkit {

enum class OptimizerKind { kSgd, kAdam };

struct OptimizerState {
  OptimizerKind algorithm = OptimizerKind::kAdam;
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  // One moment buffer per parameter tensor, sized on the first Adam step.
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

/// Updates every parameter tensor in place. Throws kDivergence on a
/// non-finite gradient, before touching any parameter.
void optimizer_step(OptimizerState& state, std::span<const std::span<double>> params,
                    std::span<const std::span<const double>> grads);

/// Tensors of `params` in a fixed order: layer weights and biases, then the
/// aggregation weights when `include_weights` is set.
std::vector<std::span<double>> parameter_tensors(DescriptorParams& params,
                                                 bool include_weights = true);
std::vector<std::span<const double>> gradient_tensors(const Gradients& grads,
                                                      bool include_weights = true);

}  // namespace pillarkit
