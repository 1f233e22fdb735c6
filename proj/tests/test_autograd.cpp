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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "pillarkit/autograd.hpp"
#include "pillarkit/error.hpp"
#include "pillarkit/optimizer.hpp"
#include "pillarkit/properties.hpp"
#include "pillarkit/serialization.hpp"

using namespace pillarkit;

namespace {

CellBatch single_cell(const std::vector<double>& values, std::size_t capacity,
                      std::size_t channels, int valid) {
  std::mt19937_64 rng(0);
  CellBatch batch = random_cell_batch(rng, 1, capacity, channels, true);
  std::fill(batch.data.begin(), batch.data.end(), 0.0);
  std::copy(values.begin(), values.end(), batch.data.begin());
  batch.valid_count[0] = valid;
  return batch;
}

CellFeatures one_hot(std::size_t channels, std::size_t hot) {
  CellFeatures f;
  f.channels = channels;
  f.values.assign(channels, 0.0);
  f.values[hot] = 1.0;
  return f;
}

DescriptorParams with_weights(MlpParams mlp, std::vector<double> w) {
  AggregationWeights weights;
  weights.rows = w.size();
  weights.values = std::move(w);
  return {std::move(mlp), std::move(weights)};
}

ForwardResult cached_forward(const DescriptorParams& params, const CellBatch& batch,
                             DescriptorKind kind) {
  ForwardOptions opts;
  opts.keep_cache = true;
  return descriptor_forward(params, batch, kind, opts);
}

}  // namespace

TEST_CASE("identity-embedding backward routes weights through the sort") {
  // Column 0 sorts to rows [1, 2, 3] from slots [1, 2, 0]; column 1 sorts to
  // [0, 1, 2] from slots [2, 0, 1].
  const auto batch = single_cell({3, 1, 1, 2, 2, 0}, 3, 2, 3);
  const auto params = with_weights(MlpParams::identity(2), {0.5, 0.25, 2.0});
  const auto fwd = cached_forward(params, batch, DescriptorKind::kWeighted);
  const auto back = descriptor_backward(params, *fwd.cache, one_hot(2, 0), true);
  CHECK(back.input_grad == std::vector<double>{2.0, 0, 0.5, 0, 0.25, 0});
  CHECK(back.grads.weights == std::vector<double>{1, 2, 3});
  // The identity layer's weight gradient is the input-channel outer product.
  CHECK(back.grads.layers[0].bias == std::vector<double>{2.75, 0});
}

TEST_CASE("one-hot upstream yields column c of the sorted matrix") {
  std::mt19937_64 rng(12);
  std::vector<std::size_t> widths{5, 4};
  std::vector<Activation> acts{Activation::kRelu, Activation::kIdentity};
  auto params = with_weights(MlpParams::random(3, widths, acts, 3, 0.2),
                             std::vector<double>(6, 0.1));
  const auto batch = random_cell_batch(rng, 1, 6, 3);
  const auto fwd = cached_forward(params, batch, DescriptorKind::kWeighted);
  const auto& cache = *fwd.cache;
  for (std::size_t c = 0; c < 4; ++c) {
    const auto back = descriptor_backward(params, cache, one_hot(4, c));
    for (std::size_t r = 0; r < 6; ++r) {
      CHECK(back.grads.weights[r] == cache.sorted[r * 4 + c]);
    }
  }
}

TEST_CASE("max and mean backward") {
  const auto batch = single_cell({3, 1, 1, 2, 2, 0}, 4, 2, 3);
  const auto params = with_weights(MlpParams::identity(2), {0, 0, 0, 1});
  CellFeatures up;
  up.channels = 2;
  up.values = {1.0, 10.0};

  const auto max_fwd = cached_forward(params, batch, DescriptorKind::kMax);
  const auto max_back = descriptor_backward(params, *max_fwd.cache, up, true);
  CHECK(max_back.input_grad == std::vector<double>{1, 0, 0, 10, 0, 0, 0, 0});
  CHECK(max_back.grads.weights == std::vector<double>{0, 0, 0, 0});

  const auto mean_fwd = cached_forward(params, batch, DescriptorKind::kMean);
  const auto mean_back = descriptor_backward(params, *mean_fwd.cache, up, true);
  for (std::size_t s = 0; s < 3; ++s) {
    CHECK(mean_back.input_grad[s * 2] == doctest::Approx(1.0 / 3));
    CHECK(mean_back.input_grad[s * 2 + 1] == doctest::Approx(10.0 / 3));
  }
  CHECK(mean_back.input_grad[6] == 0.0);
  CHECK(mean_back.input_grad[7] == 0.0);
}

TEST_CASE("backward rejects mismatched upstream shape") {
  const auto batch = single_cell({1, 2}, 2, 2, 1);
  const auto params = with_weights(MlpParams::identity(2), {0, 1});
  const auto fwd = cached_forward(params, batch, DescriptorKind::kWeighted);
  CHECK_THROWS_AS(descriptor_backward(params, *fwd.cache, one_hot(3, 0)), Error);
}

TEST_CASE("linear loss gradient on w is the column sum of the sorted matrix") {
  std::mt19937_64 rng(21);
  std::vector<std::size_t> widths{6};
  std::vector<Activation> acts{Activation::kIdentity};
  FdProblem problem{with_weights(MlpParams::random(3, widths, acts, 5, 0.3),
                                 {0.1, -0.2, 0.3, 0.4}),
                    random_cell_batch(rng, 3, 4, 3, true), DescriptorKind::kWeighted,
                    linear_sum_loss()};
  const auto fwd = cached_forward(problem.params, problem.batch, problem.kind);
  const auto up = problem.loss.gradient(fwd.features);
  const auto back = descriptor_backward(problem.params, *fwd.cache, up);
  for (std::size_t r = 0; r < 4; ++r) {
    double sum = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      for (std::size_t c = 0; c < 6; ++c) {
        sum += fwd.cache->sorted[(k * 4 + r) * 6 + c];
      }
    }
    CHECK(back.grads.weights[r] == doctest::Approx(sum).epsilon(1e-12));
  }
  FdOptions opts;
  opts.tolerance = 1e-8;
  const auto report = finite_difference_check(problem, opts);
  CHECK(report.pass);
  for (const auto& g : report.groups) {
    if (g.name == "aggregation.w") CHECK(g.max_rel_error <= 1e-8);
  }
}

TEST_CASE("finite differences agree on a small two-layer problem") {
  auto sampler = [](std::uint64_t attempt) {
    std::mt19937_64 rng(100 + attempt);
    std::vector<std::size_t> widths{5, 3};
    std::vector<Activation> acts{Activation::kRelu, Activation::kRelu};
    std::normal_distribution<double> nd;
    std::vector<double> w(4);
    for (auto& v : w) v = nd(rng);
    auto batch = random_cell_batch(rng, 2, 4, 3);
    CellFeatures target;
    target.channels = 3;
    target.values.resize(6);
    for (auto& v : target.values) v = nd(rng);
    return FdProblem{with_weights(MlpParams::random(3, widths, acts, rng(), 0.5), w),
                     std::move(batch), DescriptorKind::kWeighted,
                     squared_error_loss(target)};
  };
  const auto report = finite_difference_check(sampler);
  CHECK(report.pass);
  CHECK(report.max_rel_error() <= 1e-5);
  CHECK(report.groups.size() == 6);
}

TEST_CASE("finite differences on max and mean kinds") {
  for (auto kind : {DescriptorKind::kMax, DescriptorKind::kMean}) {
    auto sampler = [kind](std::uint64_t attempt) {
      std::mt19937_64 rng(300 + attempt);
      std::vector<std::size_t> widths{4};
      std::vector<Activation> acts{Activation::kIdentity};
      auto batch = random_cell_batch(rng, 3, 5, 2);
      return FdProblem{with_weights(MlpParams::random(2, widths, acts, rng(), 0.5),
                                    {0, 0, 0, 0, 1}),
                       std::move(batch), kind, linear_sum_loss()};
    };
    const auto report = finite_difference_check(sampler);
    CHECK(report.pass);
  }
}

TEST_CASE("a corrupted analytic gradient is reported") {
  auto sampler = [](std::uint64_t attempt) { return random_gradient_problem(0, attempt); };
  FdOptions opts;
  opts.corrupt_analytic = [](Gradients& g, std::vector<double>&) {
    for (auto& v : g.layers[0].weight) v *= 2.0;
  };
  const auto report = finite_difference_check(sampler, opts);
  CHECK_FALSE(report.pass);
  CHECK(report.groups[0].name == "layer0.weight");
  CHECK_FALSE(report.groups[0].pass);
}

TEST_CASE("a problem sitting on a tie is refused") {
  const auto batch = single_cell({1, 1, 1, 1}, 2, 2, 2);
  FdProblem problem{with_weights(MlpParams::identity(2), {0.5, 0.5}), batch,
                    DescriptorKind::kWeighted, linear_sum_loss()};
  CHECK_FALSE(is_tie_free(problem, 1e-4));
  CHECK_THROWS_AS(finite_difference_check(problem), Error);
}

TEST_CASE("parameter gradients are invariant to slot order") {
  SuiteOptions options;
  options.cells = 60;
  options.shuffles = 4;
  options.seed = 3;
  CHECK(check_backward_equivariance(options).pass());
}

TEST_CASE("gradient suite passes on a reduced budget") {
  SuiteOptions options;
  options.grad_configs = 12;
  double worst = 0.0;
  const auto result = check_gradients(options, &worst);
  CHECK(result.pass());
  CHECK(worst <= 1e-5);
}

TEST_CASE("backward is deterministic across runs") {
  std::mt19937_64 rng(31);
  std::vector<std::size_t> widths{16, 8};
  std::vector<Activation> acts{Activation::kRelu, Activation::kRelu};
  auto params = with_weights(MlpParams::random(4, widths, acts, 2, 0.1),
                             std::vector<double>(10, 0.1));
  const auto batch = random_cell_batch(rng, 40, 10, 4);
  const auto a = cached_forward(params, batch, DescriptorKind::kWeighted);
  const auto b = cached_forward(params, batch, DescriptorKind::kWeighted);
  const auto up = linear_sum_loss().gradient(a.features);
  CHECK(descriptor_backward(params, *a.cache, up, true).grads ==
        descriptor_backward(params, *b.cache, up, true).grads);
}

TEST_CASE("SGD step") {
  OptimizerState state;
  state.algorithm = OptimizerKind::kSgd;
  state.learning_rate = 0.1;
  std::vector<double> theta{1.0, -3.0};
  const std::vector<double> grad{2.0, 0.0};
  std::vector<std::span<double>> params{theta};
  std::vector<std::span<const double>> grads{grad};
  optimizer_step(state, params, grads);
  CHECK(theta[0] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(theta[1] == -3.0);
  CHECK(state.step == 1);
}

TEST_CASE("zero gradient leaves parameters unchanged") {
  for (auto kind : {OptimizerKind::kSgd, OptimizerKind::kAdam}) {
    OptimizerState state;
    state.algorithm = kind;
    std::vector<double> theta{0.25, -7.5, 1e-3};
    const auto before = theta;
    const std::vector<double> grad(3, 0.0);
    std::vector<std::span<double>> params{theta};
    std::vector<std::span<const double>> grads{grad};
    for (int i = 0; i < 5; ++i) optimizer_step(state, params, grads);
    CHECK(theta == before);
  }
}

TEST_CASE("first Adam step matches the bias-corrected formula") {
  OptimizerState state;
  state.learning_rate = 0.01;
  std::vector<double> theta{1.0, 2.0};
  const std::vector<double> grad{0.5, -4.0};
  std::vector<std::span<double>> params{theta};
  std::vector<std::span<const double>> grads{grad};
  optimizer_step(state, params, grads);
  for (std::size_t i = 0; i < 2; ++i) {
    const double m = 0.1 * grad[i] / (1 - 0.9);
    const double v = 0.001 * grad[i] * grad[i] / (1 - 0.999);
    const double expected = (i == 0 ? 1.0 : 2.0) - 0.01 * m / (std::sqrt(v) + 1e-8);
    CHECK(theta[i] == doctest::Approx(expected).epsilon(1e-14));
  }
  // The first step moves each coordinate by almost exactly the learning rate.
  CHECK(theta[0] == doctest::Approx(0.99).epsilon(1e-7));
  CHECK(theta[1] == doctest::Approx(2.01).epsilon(1e-7));
  CHECK(state.first_moment.size() == 1);
}

TEST_CASE("non-finite gradients raise divergence without touching parameters") {
  OptimizerState state;
  std::vector<double> theta{1.0, 2.0};
  const std::vector<double> grad{0.5, std::numeric_limits<double>::quiet_NaN()};
  std::vector<std::span<double>> params{theta};
  std::vector<std::span<const double>> grads{grad};
  try {
    optimizer_step(state, params, grads);
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDivergence);
  }
  CHECK(theta == std::vector<double>{1.0, 2.0});
  CHECK(state.step == 0);
}

TEST_CASE("optimizer state JSON roundtrip") {
  OptimizerState state;
  std::vector<double> theta{1.0, 2.0};
  const std::vector<double> grad{0.1 + 0.2, -1.0 / 3};
  std::vector<std::span<double>> params{theta};
  std::vector<std::span<const double>> grads{grad};
  optimizer_step(state, params, grads);
  const Json j = state;
  CHECK(Json::parse(j.dump()).get<OptimizerState>() == state);
}

TEST_CASE("parameter and gradient tensors line up") {
  std::vector<std::size_t> widths{3, 2};
  std::vector<Activation> acts{Activation::kRelu, Activation::kIdentity};
  auto params = with_weights(MlpParams::random(2, widths, acts, 1, 0.0), {0, 1});
  const auto grads = Gradients::zeros_like(params);
  const auto p = parameter_tensors(params);
  const auto g = gradient_tensors(grads);
  REQUIRE(p.size() == 5);
  REQUIRE(g.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) CHECK(p[i].size() == g[i].size());
  CHECK(parameter_tensors(params, false).size() == 4);
}
