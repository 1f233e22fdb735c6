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

// Wall-clock comparison of the three aggregators, for the whole descriptor
// and for the aggregation stage alone.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pillarkit/descriptor.hpp"

namespace pillarkit {

struct BenchConfig {
  std::vector<DescriptorKind> kinds{DescriptorKind::kWeighted,
                                    DescriptorKind::kMax,
                                    DescriptorKind::kMean};
  std::size_t capacity = 32;
  std::size_t in_channels = 9;
  std::size_t channels = 64;
  std::size_t cells = 10000;
  std::size_t repetitions = 10;
  std::size_t warmup = 1;
  // Full cells are the most expensive case for the sort.
  bool full_cells = true;
  std::uint64_t seed = 0;
  // Aggregation-only sweep over capacity on full cells. The cell count is
  // scaling_slots / capacity so every point touches the same amount of data.
  std::vector<std::size_t> scaling_capacities{8, 32, 128, 256};
  std::size_t scaling_slots = 32768;
  // Calls per timed sample in the sweep; single calls are too short to time.
  std::size_t scaling_passes = 8;
  unsigned threads = 1;

  void validate() const;
};

struct Timing {
  double median_ms = 0.0;
  double p90_ms = 0.0;
  std::vector<double> samples_ms;
};

struct KindTiming {
  DescriptorKind kind = DescriptorKind::kWeighted;
  Timing full;
  Timing aggregation;
};

struct ScalingPoint {
  std::size_t capacity = 0;
  Timing weighted;
  Timing max;
  double ratio = 0.0;  // weighted / max medians
};

struct BenchReport {
  BenchConfig config;
  std::vector<KindTiming> kinds;
  // Weighted over max medians; zero when either kind was not run.
  double full_ratio = 0.0;
  double aggregation_ratio = 0.0;
  std::vector<ScalingPoint> scaling;
  bool scaling_monotone = true;
  // Every repetition reproduced the first repetition's outputs bitwise.
  bool outputs_stable = true;
};

/// Nearest-rank percentile of `samples` (q in [0, 1]).
double percentile(std::vector<double> samples, double q);
Timing summarize(std::vector<double> samples_ms);

BenchReport bench_descriptor(const BenchConfig& config);

}  // namespace pillarkit
