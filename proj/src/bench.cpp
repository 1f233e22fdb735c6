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

#include "pillarkit/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <random>

#include "pillarkit/error.hpp"
#include "pillarkit/properties.hpp"

namespace pillarkit {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

// Runs every job once per repetition, interleaved, so slow stretches on a
// shared machine hit all jobs alike. Each sample covers `passes` calls.
template <typename Job>
std::vector<Timing> time_interleaved(const std::vector<Job>& jobs,
                                     std::size_t warmup, std::size_t repetitions,
                                     std::size_t passes) {
  for (std::size_t i = 0; i < warmup; ++i) {
    for (const auto& job : jobs) job();
  }
  std::vector<std::vector<double>> samples(jobs.size());
  for (std::size_t i = 0; i < repetitions; ++i) {
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      const auto start = Clock::now();
      for (std::size_t p = 0; p < passes; ++p) jobs[j]();
      samples[j].push_back(elapsed_ms(start) / static_cast<double>(passes));
    }
  }
  std::vector<Timing> out;
  for (auto& s : samples) out.push_back(summarize(std::move(s)));
  return out;
}

DescriptorParams bench_params(const BenchConfig& config, std::mt19937_64& rng) {
  std::vector<std::size_t> widths{config.channels};
  std::vector<Activation> acts{Activation::kRelu};
  DescriptorParams params{
      MlpParams::random(config.in_channels, widths, acts, rng(), 0.1),
      AggregationWeights::unit_last(config.capacity)};
  std::normal_distribution<double> nd(0.0, 1.0 / config.capacity);
  for (auto& v : params.weights.values) v = nd(rng);
  return params;
}

AggregationWeights random_weights(std::size_t rows, std::mt19937_64& rng) {
  auto w = AggregationWeights::unit_last(rows);
  std::normal_distribution<double> nd(0.0, 1.0 / rows);
  for (auto& v : w.values) v = nd(rng);
  return w;
}

}  // namespace

void BenchConfig::validate() const {
  require(!kinds.empty(), "bench needs at least one descriptor kind");
  require(capacity >= 1 && in_channels >= 1 && channels >= 1 && cells >= 1,
          "bench sizes must be positive");
  require(repetitions >= 1 && scaling_passes >= 1,
          "bench needs at least one repetition and one pass");
  for (std::size_t n : scaling_capacities) {
    require(n >= 1 && n <= scaling_slots,
            "scaling capacities must lie in [1, scaling_slots]");
  }
}

double percentile(std::vector<double> samples, double q) {
  require(!samples.empty(), "percentile of an empty sample");
  std::sort(samples.begin(), samples.end());
  const double rank = std::ceil(q * static_cast<double>(samples.size()));
  const std::size_t index =
      static_cast<std::size_t>(std::clamp(rank, 1.0, double(samples.size()))) - 1;
  return samples[index];
}

Timing summarize(std::vector<double> samples_ms) {
  Timing t;
  t.median_ms = percentile(samples_ms, 0.5);
  t.p90_ms = percentile(samples_ms, 0.9);
  t.samples_ms = std::move(samples_ms);
  return t;
}

BenchReport bench_descriptor(const BenchConfig& config) {
  config.validate();
  BenchReport report;
  report.config = config;
  std::mt19937_64 rng(config.seed);

  const auto batch = random_cell_batch(rng, config.cells, config.capacity,
                                       config.in_channels, config.full_cells);
  const auto params = bench_params(config, rng);
  // Aggregation-only input: the embedded cells, laid out like a batch.
  CellBatch embedded = batch;
  embedded.channels = config.channels;
  embedded.data.assign(config.cells * config.capacity * config.channels, 0.0);
  {
    ForwardOptions opts;
    opts.keep_cache = true;
    // Max keeps the smallest cache; only the activations are needed here.
    const auto fwd = descriptor_forward(params, batch, DescriptorKind::kMax, opts);
    embedded.data = fwd.cache->activations.back();
  }

  ForwardOptions opts;
  opts.threads = config.threads;
  const std::size_t count = config.kinds.size();
  std::vector<CellFeatures> first_full(count), first_agg(count);
  std::vector<bool> seen(2 * count, false);
  auto check = [&](std::size_t slot, CellFeatures& first, const CellFeatures& out) {
    if (!seen[slot]) {
      first = out;
      seen[slot] = true;
    } else if (!(out == first)) {
      report.outputs_stable = false;
    }
  };
  std::vector<std::function<void()>> jobs;
  for (std::size_t i = 0; i < count; ++i) {
    const DescriptorKind kind = config.kinds[i];
    jobs.emplace_back([&, i, kind] {
      check(i, first_full[i], descriptor_forward(params, batch, kind, opts).features);
    });
  }
  for (std::size_t i = 0; i < count; ++i) {
    const DescriptorKind kind = config.kinds[i];
    jobs.emplace_back([&, i, kind] {
      check(count + i, first_agg[i],
            aggregate_cells(params.weights, embedded, kind, config.threads));
    });
  }
  const auto timings =
      time_interleaved(jobs, config.warmup, config.repetitions, 1);
  for (std::size_t i = 0; i < count; ++i) {
    report.kinds.push_back({config.kinds[i], timings[i], timings[count + i]});
  }

  const KindTiming* weighted = nullptr;
  const KindTiming* max = nullptr;
  for (const auto& kt : report.kinds) {
    if (kt.kind == DescriptorKind::kWeighted) weighted = &kt;
    if (kt.kind == DescriptorKind::kMax) max = &kt;
  }
  if (weighted && max) {
    report.full_ratio = weighted->full.median_ms / max->full.median_ms;
    report.aggregation_ratio =
        weighted->aggregation.median_ms / max->aggregation.median_ms;
  }

  double previous = 0.0;
  for (std::size_t n : config.scaling_capacities) {
    ScalingPoint point;
    point.capacity = n;
    const auto cells = random_cell_batch(rng, config.scaling_slots / n, n,
                                         config.channels, true);
    const auto w = random_weights(n, rng);
    const std::vector<std::function<void()>> pair{
        [&] { aggregate_cells(w, cells, DescriptorKind::kWeighted, config.threads); },
        [&] { aggregate_cells(w, cells, DescriptorKind::kMax, config.threads); }};
    const auto t = time_interleaved(pair, config.warmup, config.repetitions,
                                    config.scaling_passes);
    point.weighted = t[0];
    point.max = t[1];
    point.ratio = point.weighted.median_ms / point.max.median_ms;
    if (!report.scaling.empty() && point.ratio <= previous) {
      report.scaling_monotone = false;
    }
    previous = point.ratio;
    report.scaling.push_back(std::move(point));
  }
  return report;
}

}  // namespace pillarkit
