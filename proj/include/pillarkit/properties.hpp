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

// Randomized invariant suites for the descriptor and its gradients. The CLI
// `check` command and the acceptance binary both run these.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "pillarkit/autograd.hpp"
#include "pillarkit/descriptor.hpp"

namespace pillarkit {

/// Empty batch whose cells sit at (k, 0, 0) on a unit grid. Valid counts
/// start at zero.
CellBatch line_cell_batch(std::size_t cells, std::size_t capacity,
                          std::size_t channels);

/// `cells` cells of `capacity` slots and `channels` values uniform in
/// [lo, hi]. Valid counts are uniform in [1, capacity] unless `full`.
CellBatch random_cell_batch(std::mt19937_64& rng, std::size_t cells,
                            std::size_t capacity, std::size_t channels,
                            bool full = false, double lo = -1.0, double hi = 1.0);

/// Copy of `batch` with every cell's valid slots shuffled. perms[k][s] is the
/// original slot now stored at slot s of cell k.
CellBatch shuffle_valid_slots(const CellBatch& batch, std::mt19937_64& rng,
                              std::vector<std::vector<std::size_t>>* perms = nullptr);

using ForwardFn = std::function<CellFeatures(
    const DescriptorParams&, const CellBatch&, DescriptorKind)>;

/// descriptor_forward without a cache.
ForwardFn default_forward();
/// Fault-injection stand-in that skips the sort and aggregates rows in slot
/// order. The invariance suite must reject it.
ForwardFn unsorted_forward_for_fault_injection();

struct SuiteResult {
  std::string name;
  std::size_t cases = 0;
  std::size_t failures = 0;
  double seconds = 0.0;
  std::string detail;

  bool pass() const { return failures == 0 && cases > 0; }
};

struct SuiteOptions {
  std::uint64_t seed = 0;
  std::size_t cells = 1000;
  std::size_t shuffles = 20;
  std::size_t grad_configs = 100;
  FdOptions fd;
  ForwardFn forward = default_forward();
};

/// Shuffles valid slots and demands bitwise-equal outputs for all three
/// aggregators. Capacity alternates between 5 and 32, widths span 1..64.
SuiteResult check_permutation_invariance(const SuiteOptions& options);
/// Weighted aggregation with all weight on the last row equals max-pooling
/// bitwise, on partially filled cells under a final relu.
SuiteResult check_max_special_case(const SuiteOptions& options);
/// Sorted matrices: columns non-decreasing, valid multisets preserved,
/// sources a bijection, padding zero.
SuiteResult check_sorted_matrix_contract(const SuiteOptions& options);
/// Weighted aggregation with 1/n on the valid rows equals the mean bitwise.
SuiteResult check_mean_consistency(const SuiteOptions& options);
/// Shuffling slots permutes input gradients the same way and leaves
/// parameter gradients bitwise unchanged.
SuiteResult check_backward_equivariance(const SuiteOptions& options);
/// Central finite differences on `grad_configs` random tie-free problems.
/// detail reports the worst relative error.
SuiteResult check_gradients(const SuiteOptions& options,
                            double* worst_rel_error = nullptr);

/// Random small descriptor problem for gradient checks: capacity 3..8,
/// width 2..8, depth 1..2, squared-error loss, kind cycling over config.
FdProblem random_gradient_problem(std::uint64_t config, std::uint64_t attempt);

}  // namespace pillarkit
