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

// Command-line front end. Kept in a library so tests can drive it in-process.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pillarkit/bench.hpp"
#include "pillarkit/descriptor.hpp"
#include "pillarkit/error.hpp"
#include "pillarkit/grid.hpp"
#include "pillarkit/toy.hpp"

namespace pillarkit {

enum ExitCode : int {
  kExitOk = 0,
  kExitUnexpected = 1,
  kExitConfig = 2,
  kExitIo = 3,
  kExitCheckFailure = 4,
  kExitDivergence = 5,
};

int exit_code_for(ErrorKind kind);

struct DescriptorSettings {
  DescriptorKind kind = DescriptorKind::kWeighted;
  std::vector<std::size_t> mlp_widths{64};
  Activation final_activation = Activation::kRelu;
  WeightInit weight_init = WeightInit::kUnitLast;
  AggregationMode weight_mode = AggregationMode::kShared;
  // Trained parameters to load instead of a seeded initialization.
  std::optional<std::filesystem::path> checkpoint;
};

struct CheckSettings {
  std::size_t cells = 1000;
  std::size_t shuffles = 20;
  std::size_t grad_configs = 100;
  double tolerance = 1e-5;
};

struct RunConfig {
  std::string subcommand;
  std::uint64_t seed = 0;
  GridSpec grid;
  DescriptorSettings descriptor;
  ToyTaskSpec toy;
  TrainConfig train;
  CheckSettings check;
  BenchConfig bench;
  std::filesystem::path input;
  std::filesystem::path out = ".";
  std::optional<std::filesystem::path> resume;
  bool inject_fault = false;
};

/// Parses argv, runs the subcommand and returns its exit code. Errors are
/// reported on `err`; summaries go to `out`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pillarkit
