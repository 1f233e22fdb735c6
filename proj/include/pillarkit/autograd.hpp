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

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pillarkit/descriptor.hpp"

namespace pillarkit {

struct LayerGradients {
  std::vector<double> weight;
  std::vector<double> bias;

  friend bool operator==(const LayerGradients&, const LayerGradients&) = default;
};

/// Same shapes as DescriptorParams: one entry per MLP layer plus the
/// aggregation weights.
struct Gradients {
  std::vector<LayerGradients> layers;
  std::vector<double> weights;

  static Gradients zeros_like(const DescriptorParams& params);
  friend bool operator==(const Gradients&, const Gradients&) = default;
};

struct BackwardResult {
  Gradients grads;
  // K x capacity x C_in, filled only when requested.
  std::vector<double> input_grad;
};

/// Reverse pass for a cached descriptor_forward. `upstream` holds dL/dO per
/// cell. The sort is treated as the fixed permutation recorded in the cache;
/// cells are accumulated sequentially in batch order.
BackwardResult descriptor_backward(const DescriptorParams& params,
                                   const ForwardCache& cache,
                                   const CellFeatures& upstream,
                                   bool want_input_grad = false);

/// Scalar loss on descriptor outputs together with its gradient.
struct LossFunction {
  std::function<double(const CellFeatures&)> value;
  std::function<CellFeatures(const CellFeatures&)> gradient;
};

/// L = sum of every output.
LossFunction linear_sum_loss();
/// L = 0.5 * sum (O - target)^2.
LossFunction squared_error_loss(CellFeatures target);

struct FdProblem {
  DescriptorParams params;
  CellBatch batch;
  DescriptorKind kind = DescriptorKind::kWeighted;
  LossFunction loss;
};

struct FdOptions {
  double step = 1e-5;  // scaled by max(1, |theta|) per scalar
  double tolerance = 1e-5;
  // Groups larger than this are checked on a random subsample of this many
  // scalars. Values below 200 are raised to 200.
  std::size_t max_scalars_per_group = 2000;
  std::uint64_t seed = 0;
  int max_attempts = 50;
  bool check_input = true;
  // Test hook applied to the analytic gradients before comparison.
  std::function<void(Gradients&, std::vector<double>&)> corrupt_analytic;
};

struct FdGroupReport {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  bool pass = true;
};

struct FdReport {
  std::vector<FdGroupReport> groups;
  double tolerance = 0.0;
  bool pass = true;
  int attempts = 1;

  double max_rel_error() const;
};

/// True when no relu pre-activation lies within `margin` of zero and no two
/// valid embedded values of a channel lie within `margin` of each other.
/// Entries clamped to zero by a final relu are exempt from the pairwise test
/// since they stay clamped under small perturbations.
bool is_tie_free(const FdProblem& problem, double margin);

/// Central differences against descriptor_backward at a tie-free point.
/// Throws kInvalidArgument if the problem is not tie-free at 10 * step.
FdReport finite_difference_check(const FdProblem& problem,
                                 const FdOptions& options = {});

/// Draws problems from `sampler(attempt)` until one is tie-free, then checks
/// it. Fails after options.max_attempts draws.
FdReport finite_difference_check(
    const std::function<FdProblem(std::uint64_t)>& sampler,
    const FdOptions& options = {});

}  // namespace pillarkit
