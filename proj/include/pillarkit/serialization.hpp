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

// JSON forms of the configuration and report types.

#include <filesystem>
#include <initializer_list>
#include <string>

#include "json.hpp"
#include "pillarkit/autograd.hpp"
#include "pillarkit/bench.hpp"
#include "pillarkit/descriptor.hpp"
#include "pillarkit/grid.hpp"
#include "pillarkit/optimizer.hpp"
#include "pillarkit/pointcloud.hpp"
#include "pillarkit/toy.hpp"

namespace pillarkit {

using Json = nlohmann::json;

std::string to_string(GeneratorKind kind);
std::string to_string(GridMode mode);
std::string to_string(OverflowPolicy policy);
std::string to_string(Activation activation);
std::string to_string(AggregationMode mode);
std::string to_string(DescriptorKind kind);
std::string to_string(OptimizerKind kind);
std::string to_string(ToyTask task);
std::string to_string(WeightInit init);

GeneratorKind generator_kind_from_string(const std::string& s);
GridMode grid_mode_from_string(const std::string& s);
OverflowPolicy overflow_policy_from_string(const std::string& s);
Activation activation_from_string(const std::string& s);
AggregationMode aggregation_mode_from_string(const std::string& s);
DescriptorKind descriptor_kind_from_string(const std::string& s);
OptimizerKind optimizer_kind_from_string(const std::string& s);
ToyTask toy_task_from_string(const std::string& s);
WeightInit weight_init_from_string(const std::string& s);

// Unknown keys are rejected; missing keys keep their defaults. Malformed
// documents raise Error(kConfig).
void to_json(Json& j, const SyntheticCloudSpec& spec);
void from_json(const Json& j, SyntheticCloudSpec& spec);

void to_json(Json& j, const GridSpec& spec);
void from_json(const Json& j, GridSpec& spec);

/// Checkpoint form: layer shapes, row-major weights, biases, activation tags,
/// aggregation mode and weights.
void to_json(Json& j, const DescriptorParams& params);
void from_json(const Json& j, DescriptorParams& params);

void to_json(Json& j, const OptimizerState& state);
void from_json(const Json& j, OptimizerState& state);

void to_json(Json& j, const FdReport& report);

void to_json(Json& j, const ToyTaskSpec& spec);
void from_json(const Json& j, ToyTaskSpec& spec);

void to_json(Json& j, const TrainConfig& config);
void from_json(const Json& j, TrainConfig& config);

/// Training checkpoint: descriptor, head, optimizer moments and step.
void to_json(Json& j, const TrainState& state);
void from_json(const Json& j, TrainState& state);

/// One metrics line. Wall-clock time is left out so reruns compare equal.
void to_json(Json& j, const EvalRecord& record);
void to_json(Json& j, const Metrics& metrics);

void to_json(Json& j, const BenchConfig& config);
void from_json(const Json& j, BenchConfig& config);
void to_json(Json& j, const BenchReport& report);

/// Raises Error(kConfig) if `j` is not an object or has a key outside
/// `allowed`.
void require_known_keys(const Json& j, std::initializer_list<const char*> allowed,
                        const char* where);

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& doc);

}  // namespace pillarkit
