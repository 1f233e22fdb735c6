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

#include "pillarkit/properties.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "pillarkit/error.hpp"
#include "pillarkit/seed.hpp"
#include "pillarkit/serialization.hpp"

namespace pillarkit {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::size_t uniform_int(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

DescriptorParams random_params(std::mt19937_64& rng, std::size_t in_channels,
                               std::size_t out_channels, std::size_t capacity,
                               Activation final_activation, AggregationMode mode) {
  std::vector<std::size_t> widths;
  std::vector<Activation> acts;
  if (rng() % 2) {
    widths.push_back(uniform_int(rng, 2, 16));
    acts.push_back(Activation::kRelu);
  }
  widths.push_back(out_channels);
  acts.push_back(final_activation);
  DescriptorParams params;
  params.mlp = MlpParams::random(in_channels, widths, acts, rng(), 0.2);
  params.weights.mode = mode;
  params.weights.rows = capacity;
  params.weights.channels = mode == AggregationMode::kShared ? 0 : out_channels;
  params.weights.values.resize(
      capacity * (mode == AggregationMode::kShared ? 1 : out_channels));
  std::normal_distribution<double> nd;
  for (auto& v : params.weights.values) v = nd(rng);
  return params;
}

// Cell groups sharing one parameter draw; capacity alternates 5 / 32.
struct Group {
  DescriptorParams params;
  CellBatch batch;
};

Group random_group(std::mt19937_64& rng, std::size_t group_index,
                   std::size_t cells, bool relu_final) {
  const std::size_t capacity = group_index % 2 == 0 ? 5 : 32;
  const std::size_t in_channels = uniform_int(rng, 1, 9);
  const std::size_t width = uniform_int(rng, 1, 64);
  const Activation final_act =
      relu_final || rng() % 2 ? Activation::kRelu : Activation::kIdentity;
  const AggregationMode mode =
      rng() % 4 == 0 ? AggregationMode::kPerChannel : AggregationMode::kShared;
  Group g;
  g.params = random_params(rng, in_channels, width, capacity, final_act, mode);
  g.batch = random_cell_batch(rng, cells, capacity, in_channels);
  return g;
}

constexpr std::size_t kGroupCells = 50;

template <class Fn>
void for_each_group(const SuiteOptions& options, std::uint64_t salt,
                    bool relu_final, Fn&& fn) {
  std::mt19937_64 rng(mix_seed(options.seed, salt));
  std::size_t remaining = options.cells;
  for (std::size_t g = 0; remaining > 0; ++g) {
    const std::size_t cells = std::min(remaining, kGroupCells);
    fn(random_group(rng, g, cells, relu_final), rng);
    remaining -= cells;
  }
}

std::string first_failure(const std::string& current, const std::string& message) {
  return current.empty() ? message : current;
}

}  // namespace

CellBatch line_cell_batch(std::size_t cells, std::size_t capacity,
                          std::size_t channels) {
  GridSpec spec;
  spec.range_min = {0.0, 0.0, 0.0};
  spec.range_max = {static_cast<double>(std::max<std::size_t>(cells, 1)), 1.0, 1.0};
  spec.cell_size = {1.0, 1.0, 1.0};
  spec.capacity = static_cast<int>(capacity);
  spec.max_cells = static_cast<int>(std::max<std::size_t>(cells, 1));
  spec.decorate = false;
  CellBatch batch(cells, capacity, channels, spec);
  for (std::size_t k = 0; k < cells; ++k) {
    batch.coords[k] = CellCoord{static_cast<int>(k), 0, 0};
  }
  return batch;
}

CellBatch random_cell_batch(std::mt19937_64& rng, std::size_t cells,
                            std::size_t capacity, std::size_t channels,
                            bool full, double lo, double hi) {
  CellBatch batch = line_cell_batch(cells, capacity, channels);
  std::uniform_real_distribution<double> value(lo, hi);
  for (std::size_t k = 0; k < cells; ++k) {
    const std::size_t n = full ? capacity : uniform_int(rng, 1, capacity);
    batch.valid_count[k] = static_cast<int>(n);
    auto cell = batch.cell(k);
    for (std::size_t i = 0; i < n * channels; ++i) cell[i] = value(rng);
  }
  return batch;
}

CellBatch shuffle_valid_slots(const CellBatch& batch, std::mt19937_64& rng,
                              std::vector<std::vector<std::size_t>>* perms) {
  CellBatch out = batch;
  if (perms) perms->assign(batch.size(), {});
  std::vector<std::size_t> perm;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const std::size_t n = static_cast<std::size_t>(batch.valid_count[k]);
    perm.resize(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto src = batch.cell(k);
    auto dst = out.cell(k);
    for (std::size_t s = 0; s < n; ++s) {
      std::copy_n(src.begin() + perm[s] * batch.channels, batch.channels,
                  dst.begin() + s * batch.channels);
    }
    if (perms) (*perms)[k] = perm;
  }
  return out;
}

ForwardFn default_forward() {
  return [](const DescriptorParams& params, const CellBatch& batch,
            DescriptorKind kind) {
    return descriptor_forward(params, batch, kind).features;
  };
}

ForwardFn unsorted_forward_for_fault_injection() {
  return [](const DescriptorParams& params, const CellBatch& batch,
            DescriptorKind kind) {
    if (kind != DescriptorKind::kWeighted) {
      return descriptor_forward(params, batch, kind).features;
    }
    const std::size_t channels = params.mlp.out_channels();
    CellFeatures out(batch.size(), channels);
    for (std::size_t k = 0; k < batch.size(); ++k) {
      const auto view = cell_view(batch, k);
      const auto embedded = mlp_forward(params.mlp, view);
      const std::size_t offset = batch.capacity - view.valid;
      auto o = out.row(k);
      for (std::size_t c = 0; c < channels; ++c) {
        double s = 0.0;
        for (std::size_t r = 0; r < view.valid; ++r) {
          s += params.weights.at(offset + r, c) * embedded[r * channels + c];
        }
        o[c] = s;
      }
    }
    return out;
  };
}

SuiteResult check_permutation_invariance(const SuiteOptions& options) {
  SuiteResult result;
  result.name = "permutation_invariance";
  const auto start = Clock::now();
  constexpr DescriptorKind kinds[] = {DescriptorKind::kWeighted,
                                      DescriptorKind::kMax, DescriptorKind::kMean};
  for_each_group(options, 1, false, [&](const Group& g, std::mt19937_64& rng) {
    CellFeatures reference[3];
    for (int i = 0; i < 3; ++i) {
      reference[i] = options.forward(g.params, g.batch, kinds[i]);
    }
    std::vector<bool> bad(g.batch.size(), false);
    for (std::size_t s = 0; s < options.shuffles; ++s) {
      const auto shuffled = shuffle_valid_slots(g.batch, rng);
      for (int i = 0; i < 3; ++i) {
        const auto out = options.forward(g.params, shuffled, kinds[i]);
        for (std::size_t k = 0; k < g.batch.size(); ++k) {
          const auto a = reference[i].row(k);
          const auto b = out.row(k);
          if (!std::equal(a.begin(), a.end(), b.begin())) {
            if (!bad[k]) {
              result.detail = first_failure(
                  result.detail, to_string(kinds[i]) + " output changed under a slot shuffle");
            }
            bad[k] = true;
          }
        }
      }
    }
    result.cases += g.batch.size();
    result.failures += static_cast<std::size_t>(std::count(bad.begin(), bad.end(), true));
  });
  result.seconds = seconds_since(start);
  return result;
}

SuiteResult check_max_special_case(const SuiteOptions& options) {
  SuiteResult result;
  result.name = "max_special_case";
  const auto start = Clock::now();
  for_each_group(options, 2, true, [&](const Group& g, std::mt19937_64&) {
    DescriptorParams unit = g.params;
    unit.weights = AggregationWeights::unit_last(g.batch.capacity, g.params.weights.mode,
                                                 g.params.weights.channels);
    const auto weighted = options.forward(unit, g.batch, DescriptorKind::kWeighted);
    const auto pooled = options.forward(unit, g.batch, DescriptorKind::kMax);
    for (std::size_t k = 0; k < g.batch.size(); ++k) {
      const auto a = weighted.row(k);
      const auto b = pooled.row(k);
      ++result.cases;
      if (!std::equal(a.begin(), a.end(), b.begin())) {
        ++result.failures;
        result.detail = first_failure(
            result.detail, "cell with " + std::to_string(g.batch.valid_count[k]) +
                               " of " + std::to_string(g.batch.capacity) +
                               " slots differs from max-pooling");
      }
    }
  });
  result.seconds = seconds_since(start);
  return result;
}

SuiteResult check_sorted_matrix_contract(const SuiteOptions& options) {
  SuiteResult result;
  result.name = "sorted_matrix_contract";
  const auto start = Clock::now();
  for_each_group(options, 3, false, [&](const Group& g, std::mt19937_64& rng) {
    CellBatch batch = g.batch;
    // Quantize half of the groups so ties are common.
    if (rng() % 2) {
      for (auto& v : batch.data) v = std::round(v * 4.0) / 4.0;
    }
    for (std::size_t k = 0; k < batch.size(); ++k) {
      ++result.cases;
      const auto view = cell_view(batch, k);
      const auto embedded = mlp_forward(g.params.mlp, view);
      const CellView emb{embedded, view.slots, g.params.mlp.out_channels(), view.valid};
      const auto sorted = sort_project(emb);
      const std::size_t n = view.valid;
      const std::size_t offset = sorted.rows - n;
      std::string problem;
      std::vector<double> column;
      std::vector<bool> seen(sorted.rows);
      for (std::size_t c = 0; c < sorted.channels && problem.empty(); ++c) {
        for (std::size_t r = 0; r < offset; ++r) {
          if (sorted.at(r, c) != 0.0) problem = "padding row is not zero";
        }
        for (std::size_t r = offset + 1; r < sorted.rows; ++r) {
          if (sorted.at(r - 1, c) > sorted.at(r, c)) problem = "column decreases";
          if (sorted.at(r - 1, c) == sorted.at(r, c) &&
              sorted.source_slot(r - 1, c) > sorted.source_slot(r, c)) {
            problem = "tie not broken by slot order";
          }
        }
        column.clear();
        for (std::size_t s = 0; s < n; ++s) column.push_back(emb.at(s, c));
        std::sort(column.begin(), column.end());
        for (std::size_t r = 0; r < n; ++r) {
          if (column[r] != sorted.at(offset + r, c)) problem = "multiset not preserved";
        }
        std::fill(seen.begin(), seen.end(), false);
        for (std::size_t r = 0; r < sorted.rows; ++r) {
          const std::size_t src = sorted.source_slot(r, c);
          if (src >= sorted.rows || seen[src]) {
            problem = "sources are not a bijection";
            break;
          }
          seen[src] = true;
          if (r >= offset && emb.at(src, c) != sorted.at(r, c)) {
            problem = "source slot does not hold the sorted value";
          }
          if ((r >= offset) != (src < n)) problem = "padding and valid sources mixed";
        }
      }
      if (!problem.empty()) {
        ++result.failures;
        result.detail = first_failure(result.detail, problem);
      }
    }
  });
  result.seconds = seconds_since(start);
  return result;
}

SuiteResult check_mean_consistency(const SuiteOptions& options) {
  SuiteResult result;
  result.name = "mean_consistency";
  const auto start = Clock::now();
  for_each_group(options, 4, false, [&](const Group& g, std::mt19937_64&) {
    for (std::size_t k = 0; k < g.batch.size(); ++k) {
      ++result.cases;
      const std::size_t n = static_cast<std::size_t>(g.batch.valid_count[k]);
      CellBatch single(1, g.batch.capacity, g.batch.channels, g.batch.spec);
      single.valid_count[0] = g.batch.valid_count[k];
      std::copy(g.batch.cell(k).begin(), g.batch.cell(k).end(), single.cell(0).begin());
      DescriptorParams params = g.params;
      params.weights = AggregationWeights{};
      params.weights.rows = g.batch.capacity;
      params.weights.values.assign(g.batch.capacity, 0.0);
      for (std::size_t r = g.batch.capacity - n; r < g.batch.capacity; ++r) {
        params.weights.values[r] = 1.0 / static_cast<double>(n);
      }
      const auto weighted = options.forward(params, single, DescriptorKind::kWeighted);
      const auto mean = options.forward(params, single, DescriptorKind::kMean);
      if (weighted.values != mean.values) {
        ++result.failures;
        result.detail = first_failure(result.detail, "1/n weights differ from the mean");
      }
    }
  });
  result.seconds = seconds_since(start);
  return result;
}

SuiteResult check_backward_equivariance(const SuiteOptions& options) {
  SuiteResult result;
  result.name = "backward_equivariance";
  const auto start = Clock::now();
  constexpr DescriptorKind kinds[] = {DescriptorKind::kWeighted,
                                      DescriptorKind::kMax, DescriptorKind::kMean};
  std::size_t group_index = 0;
  for_each_group(options, 5, false, [&](const Group& g, std::mt19937_64& rng) {
    const DescriptorKind kind = kinds[group_index++ % 3];
    ForwardOptions cached;
    cached.keep_cache = true;
    const auto fwd = descriptor_forward(g.params, g.batch, kind, cached);
    CellFeatures upstream = fwd.features;
    std::normal_distribution<double> nd;
    for (auto& v : upstream.values) v = nd(rng);
    const auto ref = descriptor_backward(g.params, *fwd.cache, upstream, true);

    std::vector<std::vector<std::size_t>> perms;
    const auto shuffled = shuffle_valid_slots(g.batch, rng, &perms);
    const auto fwd2 = descriptor_forward(g.params, shuffled, kind, cached);
    const auto got = descriptor_backward(g.params, *fwd2.cache, upstream, true);

    result.cases += g.batch.size();
    if (!(got.grads == ref.grads)) {
      ++result.failures;
      result.detail = first_failure(result.detail, to_string(kind) +
                                    ": parameter gradients changed under a slot shuffle");
    }
    const std::size_t width = g.batch.channels;
    for (std::size_t k = 0; k < g.batch.size(); ++k) {
      const std::size_t base = k * g.batch.cell_stride();
      for (std::size_t s = 0; s < perms[k].size(); ++s) {
        const double* a = got.input_grad.data() + base + s * width;
        const double* b = ref.input_grad.data() + base + perms[k][s] * width;
        if (!std::equal(a, a + width, b)) {
          ++result.failures;
          result.detail = first_failure(result.detail, to_string(kind) +
                                        ": input gradients not permuted with the slots");
          break;
        }
      }
    }
  });
  result.seconds = seconds_since(start);
  return result;
}

FdProblem random_gradient_problem(std::uint64_t config, std::uint64_t attempt) {
  std::mt19937_64 rng(mix_seed(config, attempt));
  const std::size_t capacity = uniform_int(rng, 3, 8);
  const std::size_t width = uniform_int(rng, 2, 8);
  const std::size_t depth = uniform_int(rng, 1, 2);
  const std::size_t in_channels = uniform_int(rng, 2, 5);
  const std::size_t cells = uniform_int(rng, 1, 3);

  constexpr DescriptorKind kinds[] = {DescriptorKind::kWeighted,
                                      DescriptorKind::kMax, DescriptorKind::kMean};
  FdProblem problem;
  problem.kind = kinds[config % 3];
  std::vector<std::size_t> widths;
  std::vector<Activation> acts;
  for (std::size_t l = 0; l + 1 < depth; ++l) {
    widths.push_back(uniform_int(rng, 2, 8));
    acts.push_back(Activation::kRelu);
  }
  widths.push_back(width);
  acts.push_back((config / 3) % 2 ? Activation::kRelu : Activation::kIdentity);
  problem.params.mlp = MlpParams::random(in_channels, widths, acts, rng(), 0.5);

  auto& w = problem.params.weights;
  w.mode = config % 4 == 3 ? AggregationMode::kPerChannel : AggregationMode::kShared;
  w.rows = capacity;
  w.channels = w.mode == AggregationMode::kShared ? 0 : width;
  w.values.resize(capacity * (w.mode == AggregationMode::kShared ? 1 : width));
  std::normal_distribution<double> nd;
  for (auto& v : w.values) v = nd(rng);

  problem.batch = random_cell_batch(rng, cells, capacity, in_channels);
  CellFeatures target(cells, width);
  for (auto& v : target.values) v = nd(rng);
  problem.loss = squared_error_loss(std::move(target));
  return problem;
}

SuiteResult check_gradients(const SuiteOptions& options, double* worst_rel_error) {
  SuiteResult result;
  result.name = "gradient_check";
  const auto start = Clock::now();
  double worst = 0.0;
  for (std::size_t config = 0; config < options.grad_configs; ++config) {
    ++result.cases;
    const std::uint64_t id = mix_seed(options.seed, config);
    FdOptions fd = options.fd;
    fd.seed = id;
    try {
      const auto report = finite_difference_check(
          [&](std::uint64_t attempt) {
            auto p = random_gradient_problem(config, mix_seed(id, attempt));
            return p;
          },
          fd);
      worst = std::max(worst, report.max_rel_error());
      if (!report.pass) {
        ++result.failures;
        for (const auto& g : report.groups) {
          if (!g.pass) {
            result.detail = first_failure(
                result.detail, "config " + std::to_string(config) + " group " +
                                   g.name + " rel error " + std::to_string(g.max_rel_error));
          }
        }
      }
    } catch (const Error& e) {
      ++result.failures;
      result.detail = first_failure(result.detail, e.what());
    }
  }
  std::ostringstream os;
  os << "worst relative error " << worst;
  result.detail = result.detail.empty() ? os.str() : result.detail + "; " + os.str();
  if (worst_rel_error) *worst_rel_error = worst;
  result.seconds = seconds_since(start);
  return result;
}

}  // namespace pillarkit
