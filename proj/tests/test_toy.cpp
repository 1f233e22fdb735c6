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

#include <algorithm>
#include <vector>

#include "pillarkit/bench.hpp"
#include "pillarkit/error.hpp"
#include "pillarkit/serialization.hpp"
#include "pillarkit/toy.hpp"

using namespace pillarkit;

namespace {

ToyTaskSpec small_task(std::uint64_t seed, std::size_t pairs = 100) {
  ToyTaskSpec spec;
  spec.seed = seed;
  spec.cells_per_class = pairs;
  return spec;
}

std::vector<double> column(const CellBatch& batch, std::size_t k, std::size_t c) {
  std::vector<double> out;
  for (int s = 0; s < batch.valid_count[k]; ++s) {
    out.push_back(batch.cell(k)[static_cast<std::size_t>(s) * batch.channels + c]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("toy datasets are deterministic per seed") {
  const auto a = build_toy_dataset(small_task(3));
  const auto b = build_toy_dataset(small_task(3));
  const auto c = build_toy_dataset(small_task(4));
  CHECK(a.train == b.train);
  CHECK(a.val == b.val);
  CHECK(a.train_targets == b.train_targets);
  CHECK_FALSE(a.train == c.train);
}

TEST_CASE("equal-extremes pairs share every per-channel min and max") {
  const auto data = build_toy_dataset(small_task(1));
  for (const auto* part : {&data.train, &data.val}) {
    REQUIRE(part->size() % 2 == 0);
    for (std::size_t k = 0; k < part->size(); k += 2) {
      for (std::size_t c = 0; c < 4; ++c) {
        const auto zero = column(*part, k, c);
        const auto one = column(*part, k + 1, c);
        CHECK(zero.front() == one.front());
        CHECK(zero.back() == one.back());
        // Interior order statistics differ: the class-1 median hugs an end.
        CHECK(zero[16] != one[16]);
      }
    }
  }
  CHECK(data.train.size() + data.val.size() == 200);
  CHECK(data.train.size() == 100);
}

TEST_CASE("identity max-pool features cannot tell the classes apart") {
  const auto data = build_toy_dataset(small_task(2));
  DescriptorParams params{MlpParams::identity(4), AggregationWeights::unit_last(32)};
  const auto out = descriptor_forward(params, data.val, DescriptorKind::kMax).features;
  for (std::size_t k = 0; k < data.val.size(); k += 2) {
    CHECK(std::equal(out.row(k).begin(), out.row(k).end(), out.row(k + 1).begin()));
    CHECK(data.val_targets[k] == 0.0);
    CHECK(data.val_targets[k + 1] == 1.0);
  }
}

TEST_CASE("the quantile-threshold oracle separates 1000 cells") {
  const auto data = build_toy_dataset(small_task(9, 500));
  CHECK(data.train.size() + data.val.size() == 1000);
  CHECK(quantile_oracle_accuracy(data) >= 0.99);
}

TEST_CASE("quantile regression targets are the requested order statistic") {
  ToyTaskSpec spec;
  spec.task = ToyTask::kQuantileRegression;
  spec.cells_per_class = 40;
  spec.capacity = 9;
  spec.raw_channels = 2;
  spec.quantile = 0.25;
  const auto data = build_toy_dataset(spec);
  for (std::size_t k = 0; k < data.train.size(); ++k) {
    CHECK(column(data.train, k, 0)[2] == data.train_targets[k]);
  }
  CHECK_THROWS_AS(quantile_oracle_accuracy(data), Error);
}

TEST_CASE("toy spec and train config validation") {
  ToyTaskSpec spec;
  spec.raw_channels = 3;
  CHECK_THROWS_AS(spec.validate(), Error);
  spec = ToyTaskSpec{};
  spec.split = 1.0;
  CHECK_THROWS_AS(spec.validate(), Error);
  TrainConfig config;
  config.steps = 0;
  CHECK_THROWS_AS(config.validate(), Error);
  config = TrainConfig{};
  config.batch_size = 0;
  CHECK_THROWS_AS(config.validate(), Error);
}

TEST_CASE("frozen unit-last weights train exactly like max-pooling") {
  const auto data = build_toy_dataset(small_task(5, 40));
  TrainConfig config;
  config.mlp_widths = {8, 6};
  config.steps = 60;
  config.eval_every = 20;
  config.train_weights = false;
  config.kind = DescriptorKind::kWeighted;
  const auto weighted = train_descriptor(data, config);
  config.kind = DescriptorKind::kMax;
  const auto max = train_descriptor(data, config);
  CHECK(weighted.metrics.step_losses == max.metrics.step_losses);
  CHECK(weighted.metrics.evals == max.metrics.evals);
  CHECK(weighted.state.descriptor.mlp == max.state.descriptor.mlp);
  CHECK(weighted.state.head == max.state.head);
}

TEST_CASE("resumed training matches an uninterrupted run bitwise") {
  const auto data = build_toy_dataset(small_task(6, 40));
  TrainConfig config;
  config.mlp_widths = {8};
  config.steps = 90;
  config.eval_every = 25;
  const auto full = train_descriptor(data, config);

  TrainConfig first = config;
  first.stop_after = 40;
  const auto head = train_descriptor(data, first);
  CHECK(head.state.step == 40);
  const Json checkpoint = head.state;
  const auto restored = Json::parse(checkpoint.dump()).get<TrainState>();
  CHECK(restored == head.state);
  const auto tail = train_descriptor(data, config, restored);

  CHECK(tail.state == full.state);
  auto evals = head.metrics.evals;
  evals.insert(evals.end(), tail.metrics.evals.begin(), tail.metrics.evals.end());
  CHECK(evals == full.metrics.evals);
  auto losses = head.metrics.step_losses;
  losses.insert(losses.end(), tail.metrics.step_losses.begin(),
                tail.metrics.step_losses.end());
  CHECK(losses == full.metrics.step_losses);
}

TEST_CASE("training is reproducible") {
  const auto data = build_toy_dataset(small_task(7, 30));
  TrainConfig config;
  config.steps = 50;
  const auto a = train_descriptor(data, config);
  const auto b = train_descriptor(data, config);
  CHECK(a.state == b.state);
  CHECK(a.metrics.evals == b.metrics.evals);
}

TEST_CASE("max-pool stays at chance while the weighted descriptor learns") {
  const auto data = build_toy_dataset(small_task(11, 200));
  TrainConfig config;
  config.steps = 400;
  config.kind = DescriptorKind::kMax;
  CHECK(train_descriptor(data, config).metrics.final_metric <= 0.60);
  config.kind = DescriptorKind::kWeighted;
  CHECK(train_descriptor(data, config).metrics.final_metric >= 0.95);
}

TEST_CASE("weighted training loss drops by step 200 on five seeds") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto data = build_toy_dataset(small_task(seed, 100));
    TrainConfig config;
    config.seed = seed;
    config.steps = 200;
    const auto result = train_descriptor(data, config);
    REQUIRE(result.metrics.evals.size() == 3);
    CHECK(result.metrics.evals.back().train_loss <
          result.metrics.evals.front().train_loss);
  }
}

TEST_CASE("learned weights regress a quantile better than max-pooling") {
  ToyTaskSpec spec;
  spec.task = ToyTask::kQuantileRegression;
  spec.cells_per_class = 400;
  spec.capacity = 16;
  spec.raw_channels = 2;
  const auto data = build_toy_dataset(spec);
  TrainConfig config;
  config.steps = 600;
  config.kind = DescriptorKind::kMax;
  const double max_mse = train_descriptor(data, config).metrics.final_metric;
  config.kind = DescriptorKind::kWeighted;
  const double weighted_mse = train_descriptor(data, config).metrics.final_metric;
  CHECK(weighted_mse < 0.25 * max_mse);
}

TEST_CASE("a runaway learning rate is reported as divergence") {
  const auto data = build_toy_dataset(small_task(8, 20));
  TrainConfig config;
  config.optimizer = OptimizerKind::kSgd;
  config.learning_rate = 1e300;
  config.steps = 20;
  try {
    train_descriptor(data, config);
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDivergence);
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}

TEST_CASE("toy JSON forms round-trip") {
  ToyTaskSpec spec;
  spec.task = ToyTask::kQuantileRegression;
  spec.quantile = 0.75;
  const Json sj = spec;
  const auto spec2 = sj.get<ToyTaskSpec>();
  CHECK(Json(spec2) == sj);

  TrainConfig config;
  config.mlp_widths = {16, 4};
  config.weight_init = WeightInit::kUniform;
  config.kind = DescriptorKind::kMean;
  const Json cj = config;
  CHECK(Json(cj.get<TrainConfig>()) == cj);
  CHECK_THROWS_AS(Json::parse(R"({"stepz": 3})").get<TrainConfig>(), Error);
  CHECK_THROWS_AS(Json::parse(R"({"task": "regression"})").get<ToyTaskSpec>(), Error);
}

TEST_CASE("percentiles use the nearest rank") {
  CHECK(percentile({5, 1, 3, 2, 4}, 0.5) == 3);
  CHECK(percentile({1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, 0.9) == 9);
  CHECK(percentile({7}, 0.9) == 7);
  CHECK_THROWS_AS(percentile({}, 0.5), Error);
}

TEST_CASE("bench reports every kind and never perturbs outputs") {
  BenchConfig config;
  config.cells = 200;
  config.repetitions = 3;
  config.scaling_capacities = {4, 16};
  config.scaling_slots = 256;
  config.scaling_passes = 1;
  const auto report = bench_descriptor(config);
  CHECK(report.kinds.size() == 3);
  CHECK(report.outputs_stable);
  CHECK(report.full_ratio > 0.0);
  CHECK(report.scaling.size() == 2);
  for (const auto& k : report.kinds) CHECK(k.full.samples_ms.size() == 3);
  const Json j = report;
  CHECK(j.contains("full_ratio"));
  CHECK(j.at("kinds").size() == 3);
  config.repetitions = 0;
  CHECK_THROWS_AS(bench_descriptor(config), Error);
}
