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

#include "pillarkit/serialization.hpp"

#include <algorithm>
#include <fstream>
#include <initializer_list>

#include "pillarkit/error.hpp"

namespace pillarkit {

namespace {

template <class Enum>
struct Names {
  Enum value;
  const char* name;
};

template <class Enum, std::size_t N>
std::string name_of(const Names<Enum> (&table)[N], Enum value) {
  for (const auto& e : table) {
    if (e.value == value) return e.name;
  }
  return "unknown";
}

template <class Enum, std::size_t N>
Enum parse_name(const Names<Enum> (&table)[N], const std::string& s,
                const char* what) {
  for (const auto& e : table) {
    if (s == e.name) return e.value;
  }
  std::string options;
  for (const auto& e : table) options += std::string(options.empty() ? "" : ", ") + e.name;
  fail(ErrorKind::kConfig,
       "unknown " + std::string(what) + " '" + s + "' (expected " + options + ")");
}

constexpr Names<GeneratorKind> kGeneratorNames[] = {
    {GeneratorKind::kUniformBox, "uniform-box"},
    {GeneratorKind::kGaussianClusters, "gaussian-clusters"},
    {GeneratorKind::kEqualExtremesPair, "equal-extremes-pair"}};
constexpr Names<GridMode> kModeNames[] = {{GridMode::kPillar, "pillar"},
                                          {GridMode::kVoxel, "voxel"}};
constexpr Names<OverflowPolicy> kOverflowNames[] = {
    {OverflowPolicy::kKeepFirst, "keep-first"},
    {OverflowPolicy::kSeededSubsample, "seeded-subsample"}};
constexpr Names<Activation> kActivationNames[] = {
    {Activation::kRelu, "relu"}, {Activation::kIdentity, "identity"}};
constexpr Names<AggregationMode> kAggregationNames[] = {
    {AggregationMode::kShared, "shared"},
    {AggregationMode::kPerChannel, "per-channel"}};
constexpr Names<DescriptorKind> kKindNames[] = {
    {DescriptorKind::kWeighted, "weighted"},
    {DescriptorKind::kMax, "max"},
    {DescriptorKind::kMean, "mean"}};
constexpr Names<OptimizerKind> kOptimizerNames[] = {
    {OptimizerKind::kSgd, "sgd"}, {OptimizerKind::kAdam, "adam"}};
constexpr Names<ToyTask> kTaskNames[] = {
    {ToyTask::kEqualExtremes, "equal-extremes"},
    {ToyTask::kQuantileRegression, "quantile-regression"}};
constexpr Names<WeightInit> kInitNames[] = {
    {WeightInit::kUnitLast, "unit-last"}, {WeightInit::kUniform, "uniform"}};

void check_keys(const Json& j, std::initializer_list<const char*> allowed,
                const char* where) {
  if (!j.is_object()) {
    fail(ErrorKind::kConfig, std::string(where) + " must be a JSON object");
  }
  for (const auto& item : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* k) {
      return item.key() == k;
    });
    if (!known) {
      fail(ErrorKind::kConfig,
           std::string(where) + ": unknown key '" + item.key() + "'");
    }
  }
}

template <class T>
void read_opt(const Json& j, const char* key, T& out, const char* where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const Json::exception& e) {
    fail(ErrorKind::kConfig,
         std::string(where) + "." + key + ": " + e.what());
  }
}

template <class T>
T read_req(const Json& j, const char* key, const char* where) {
  if (!j.contains(key)) {
    fail(ErrorKind::kConfig, std::string(where) + ": missing key '" + key + "'");
  }
  T out{};
  read_opt(j, key, out, where);
  return out;
}

// Re-raises validation failures as configuration errors.
template <class Fn>
void validated(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kInvalidArgument) fail(ErrorKind::kConfig, e.what());
    throw;
  }
}

}  // namespace

std::string to_string(GeneratorKind v) { return name_of(kGeneratorNames, v); }
std::string to_string(GridMode v) { return name_of(kModeNames, v); }
std::string to_string(OverflowPolicy v) { return name_of(kOverflowNames, v); }
std::string to_string(Activation v) { return name_of(kActivationNames, v); }
std::string to_string(AggregationMode v) { return name_of(kAggregationNames, v); }
std::string to_string(DescriptorKind v) { return name_of(kKindNames, v); }
std::string to_string(OptimizerKind v) { return name_of(kOptimizerNames, v); }
std::string to_string(ToyTask v) { return name_of(kTaskNames, v); }
std::string to_string(WeightInit v) { return name_of(kInitNames, v); }

ToyTask toy_task_from_string(const std::string& s) {
  return parse_name(kTaskNames, s, "toy task");
}
WeightInit weight_init_from_string(const std::string& s) {
  return parse_name(kInitNames, s, "weight init");
}

GeneratorKind generator_kind_from_string(const std::string& s) {
  return parse_name(kGeneratorNames, s, "generator kind");
}
GridMode grid_mode_from_string(const std::string& s) {
  return parse_name(kModeNames, s, "grid mode");
}
OverflowPolicy overflow_policy_from_string(const std::string& s) {
  return parse_name(kOverflowNames, s, "overflow policy");
}
Activation activation_from_string(const std::string& s) {
  return parse_name(kActivationNames, s, "activation");
}
AggregationMode aggregation_mode_from_string(const std::string& s) {
  return parse_name(kAggregationNames, s, "aggregation mode");
}
DescriptorKind descriptor_kind_from_string(const std::string& s) {
  return parse_name(kKindNames, s, "descriptor kind");
}
OptimizerKind optimizer_kind_from_string(const std::string& s) {
  return parse_name(kOptimizerNames, s, "optimizer");
}

void to_json(Json& j, const SyntheticCloudSpec& spec) {
  j = Json{{"kind", to_string(spec.kind)},
           {"extent", {{"min", spec.extent.min}, {"max", spec.extent.max}}},
           {"count", spec.count},
           {"seed", spec.seed}};
  if (spec.label) j["label"] = *spec.label;
  if (spec.kind == GeneratorKind::kGaussianClusters) {
    j["centers"] = spec.centers;
    j["clusters"] = spec.cluster_count;
    j["sigma"] = spec.sigma;
  }
}

void from_json(const Json& j, SyntheticCloudSpec& spec) {
  constexpr const char* where = "synthetic cloud spec";
  check_keys(j, {"kind", "extent", "count", "seed", "label", "centers",
                 "clusters", "sigma"},
             where);
  spec = SyntheticCloudSpec{};
  spec.kind = generator_kind_from_string(read_req<std::string>(j, "kind", where));
  if (j.contains("extent")) {
    const auto& e = j.at("extent");
    check_keys(e, {"min", "max"}, "synthetic cloud spec extent");
    read_opt(e, "min", spec.extent.min, where);
    read_opt(e, "max", spec.extent.max, where);
  }
  spec.count = read_req<std::size_t>(j, "count", where);
  read_opt(j, "seed", spec.seed, where);
  if (j.contains("label") && !j.at("label").is_null()) {
    spec.label = read_req<int>(j, "label", where);
  }
  read_opt(j, "centers", spec.centers, where);
  read_opt(j, "clusters", spec.cluster_count, where);
  read_opt(j, "sigma", spec.sigma, where);
  validated([&] { spec.validate(); });
}

void to_json(Json& j, const GridSpec& spec) {
  j = Json{{"mode", to_string(spec.mode)},
           {"range_min", spec.range_min},
           {"range_max", spec.range_max},
           {"cell_size", spec.cell_size},
           {"capacity", spec.capacity},
           {"max_cells", spec.max_cells},
           {"overflow", to_string(spec.overflow)},
           {"subsample_seed", spec.subsample_seed},
           {"decorate", spec.decorate}};
}

void from_json(const Json& j, GridSpec& spec) {
  constexpr const char* where = "grid spec";
  check_keys(j, {"mode", "range_min", "range_max", "cell_size", "capacity",
                 "max_cells", "overflow", "subsample_seed", "decorate"},
             where);
  // The mode picks the baseline defaults that other keys then override.
  std::string mode = to_string(spec.mode);
  read_opt(j, "mode", mode, where);
  const GridMode parsed = grid_mode_from_string(mode);
  if (parsed != spec.mode) {
    spec = parsed == GridMode::kPillar ? GridSpec::pillar_default()
                                       : GridSpec::voxel_default();
  }
  read_opt(j, "range_min", spec.range_min, where);
  read_opt(j, "range_max", spec.range_max, where);
  read_opt(j, "cell_size", spec.cell_size, where);
  read_opt(j, "capacity", spec.capacity, where);
  read_opt(j, "max_cells", spec.max_cells, where);
  if (j.contains("overflow")) {
    spec.overflow =
        overflow_policy_from_string(read_req<std::string>(j, "overflow", where));
  }
  read_opt(j, "subsample_seed", spec.subsample_seed, where);
  read_opt(j, "decorate", spec.decorate, where);
  validated([&] { spec.validate(); });
}

void to_json(Json& j, const DescriptorParams& params) {
  Json layers = Json::array();
  for (const auto& l : params.mlp.layers) {
    layers.push_back({{"inputs", l.inputs},
                      {"outputs", l.outputs},
                      {"activation", to_string(l.activation)},
                      {"weight", l.weight},
                      {"bias", l.bias}});
  }
  j = Json{{"layers", std::move(layers)},
           {"aggregation",
            {{"mode", to_string(params.weights.mode)},
             {"rows", params.weights.rows},
             {"channels", params.weights.channels},
             {"values", params.weights.values}}}};
}

void from_json(const Json& j, DescriptorParams& params) {
  constexpr const char* where = "descriptor checkpoint";
  check_keys(j, {"layers", "aggregation"}, where);
  params = DescriptorParams{};
  const Json layers = read_req<Json>(j, "layers", where);
  if (!layers.is_array()) fail(ErrorKind::kConfig, "layers must be an array");
  for (const auto& lj : layers) {
    check_keys(lj, {"inputs", "outputs", "activation", "weight", "bias"},
               "descriptor layer");
    DenseLayer layer;
    layer.inputs = read_req<std::size_t>(lj, "inputs", where);
    layer.outputs = read_req<std::size_t>(lj, "outputs", where);
    layer.activation =
        activation_from_string(read_req<std::string>(lj, "activation", where));
    layer.weight = read_req<std::vector<double>>(lj, "weight", where);
    layer.bias = read_req<std::vector<double>>(lj, "bias", where);
    params.mlp.layers.push_back(std::move(layer));
  }
  const Json agg = read_req<Json>(j, "aggregation", where);
  check_keys(agg, {"mode", "rows", "channels", "values"}, "aggregation");
  params.weights.mode =
      aggregation_mode_from_string(read_req<std::string>(agg, "mode", where));
  params.weights.rows = read_req<std::size_t>(agg, "rows", where);
  read_opt(agg, "channels", params.weights.channels, where);
  params.weights.values = read_req<std::vector<double>>(agg, "values", where);
  validated([&] { params.validate(params.weights.rows); });
}

void to_json(Json& j, const OptimizerState& state) {
  j = Json{{"algorithm", to_string(state.algorithm)},
           {"learning_rate", state.learning_rate},
           {"beta1", state.beta1},
           {"beta2", state.beta2},
           {"epsilon", state.epsilon},
           {"step", state.step},
           {"first_moment", state.first_moment},
           {"second_moment", state.second_moment}};
}

void from_json(const Json& j, OptimizerState& state) {
  constexpr const char* where = "optimizer state";
  check_keys(j, {"algorithm", "learning_rate", "beta1", "beta2", "epsilon",
                 "step", "first_moment", "second_moment"},
             where);
  state = OptimizerState{};
  state.algorithm =
      optimizer_kind_from_string(read_req<std::string>(j, "algorithm", where));
  read_opt(j, "learning_rate", state.learning_rate, where);
  read_opt(j, "beta1", state.beta1, where);
  read_opt(j, "beta2", state.beta2, where);
  read_opt(j, "epsilon", state.epsilon, where);
  read_opt(j, "step", state.step, where);
  read_opt(j, "first_moment", state.first_moment, where);
  read_opt(j, "second_moment", state.second_moment, where);
}

void to_json(Json& j, const FdReport& report) {
  Json groups = Json::array();
  for (const auto& g : report.groups) {
    groups.push_back({{"name", g.name},
                      {"checked", g.checked},
                      {"max_rel_error", g.max_rel_error},
                      {"pass", g.pass}});
  }
  j = Json{{"groups", std::move(groups)},
           {"tolerance", report.tolerance},
           {"max_rel_error", report.max_rel_error()},
           {"attempts", report.attempts},
           {"pass", report.pass}};
}

void to_json(Json& j, const ToyTaskSpec& spec) {
  j = Json{{"task", to_string(spec.task)},
           {"cells_per_class", spec.cells_per_class},
           {"capacity", spec.capacity},
           {"raw_channels", spec.raw_channels},
           {"seed", spec.seed},
           {"split", spec.split},
           {"quantile", spec.quantile}};
}

void from_json(const Json& j, ToyTaskSpec& spec) {
  constexpr const char* where = "toy task";
  check_keys(j, {"task", "cells_per_class", "capacity", "raw_channels", "seed",
                 "split", "quantile"},
             where);
  if (j.contains("task")) {
    spec.task = toy_task_from_string(read_req<std::string>(j, "task", where));
  }
  read_opt(j, "cells_per_class", spec.cells_per_class, where);
  read_opt(j, "capacity", spec.capacity, where);
  read_opt(j, "raw_channels", spec.raw_channels, where);
  read_opt(j, "seed", spec.seed, where);
  read_opt(j, "split", spec.split, where);
  read_opt(j, "quantile", spec.quantile, where);
  validated([&] { spec.validate(); });
}

void to_json(Json& j, const TrainConfig& config) {
  j = Json{{"kind", to_string(config.kind)},
           {"mlp_widths", config.mlp_widths},
           {"final_activation", to_string(config.final_activation)},
           {"train_mlp", config.train_mlp},
           {"train_weights", config.train_weights},
           {"weight_init", to_string(config.weight_init)},
           {"weight_mode", to_string(config.weight_mode)},
           {"optimizer", to_string(config.optimizer)},
           {"learning_rate", config.learning_rate},
           {"steps", config.steps},
           {"batch_size", config.batch_size},
           {"eval_every", config.eval_every},
           {"seed", config.seed},
           {"stop_after", config.stop_after}};
}

void from_json(const Json& j, TrainConfig& config) {
  constexpr const char* where = "train config";
  check_keys(j, {"kind", "mlp_widths", "final_activation", "train_mlp",
                 "train_weights", "weight_init", "weight_mode", "optimizer",
                 "learning_rate", "steps", "batch_size", "eval_every", "seed",
                 "stop_after"},
             where);
  if (j.contains("kind")) {
    config.kind = descriptor_kind_from_string(read_req<std::string>(j, "kind", where));
  }
  read_opt(j, "mlp_widths", config.mlp_widths, where);
  if (j.contains("final_activation")) {
    config.final_activation =
        activation_from_string(read_req<std::string>(j, "final_activation", where));
  }
  read_opt(j, "train_mlp", config.train_mlp, where);
  read_opt(j, "train_weights", config.train_weights, where);
  if (j.contains("weight_init")) {
    config.weight_init =
        weight_init_from_string(read_req<std::string>(j, "weight_init", where));
  }
  if (j.contains("weight_mode")) {
    config.weight_mode =
        aggregation_mode_from_string(read_req<std::string>(j, "weight_mode", where));
  }
  if (j.contains("optimizer")) {
    config.optimizer =
        optimizer_kind_from_string(read_req<std::string>(j, "optimizer", where));
  }
  read_opt(j, "learning_rate", config.learning_rate, where);
  read_opt(j, "steps", config.steps, where);
  read_opt(j, "batch_size", config.batch_size, where);
  read_opt(j, "eval_every", config.eval_every, where);
  read_opt(j, "seed", config.seed, where);
  read_opt(j, "stop_after", config.stop_after, where);
  validated([&] { config.validate(); });
}

void to_json(Json& j, const TrainState& state) {
  j = Json{{"step", state.step},
           {"descriptor", state.descriptor},
           {"head",
            {{"inputs", state.head.inputs},
             {"outputs", state.head.outputs},
             {"weight", state.head.weight},
             {"bias", state.head.bias}}},
           {"optimizer", state.optimizer}};
}

void from_json(const Json& j, TrainState& state) {
  constexpr const char* where = "training checkpoint";
  check_keys(j, {"step", "descriptor", "head", "optimizer"}, where);
  state = TrainState{};
  state.step = read_req<std::uint64_t>(j, "step", where);
  state.descriptor = read_req<Json>(j, "descriptor", where).get<DescriptorParams>();
  state.optimizer = read_req<Json>(j, "optimizer", where).get<OptimizerState>();
  const Json head = read_req<Json>(j, "head", where);
  check_keys(head, {"inputs", "outputs", "weight", "bias"}, "checkpoint head");
  state.head.inputs = read_req<std::size_t>(head, "inputs", "checkpoint head");
  state.head.outputs = read_req<std::size_t>(head, "outputs", "checkpoint head");
  state.head.weight = read_req<std::vector<double>>(head, "weight", "checkpoint head");
  state.head.bias = read_req<std::vector<double>>(head, "bias", "checkpoint head");
  if (state.head.weight.size() != state.head.inputs * state.head.outputs ||
      state.head.bias.size() != state.head.outputs ||
      state.head.inputs != state.descriptor.mlp.out_channels()) {
    fail(ErrorKind::kConfig, "checkpoint head shape does not match the descriptor");
  }
}

void to_json(Json& j, const EvalRecord& record) {
  j = Json{{"step", record.step},
           {"train_loss", record.train_loss},
           {"val_loss", record.val_loss},
           {"val_metric", record.val_metric}};
}

void to_json(Json& j, const Metrics& metrics) {
  const bool classify = metrics.task == ToyTask::kEqualExtremes;
  j = Json{{"kind", to_string(metrics.kind)},
           {"task", to_string(metrics.task)},
           {"steps_run", metrics.step_losses.size()},
           {classify ? "final_accuracy" : "final_mse", metrics.final_metric},
           {"seconds", metrics.seconds}};
}

void to_json(Json& j, const BenchConfig& config) {
  std::vector<std::string> kinds;
  for (auto k : config.kinds) kinds.push_back(to_string(k));
  j = Json{{"kinds", kinds},
           {"capacity", config.capacity},
           {"in_channels", config.in_channels},
           {"channels", config.channels},
           {"cells", config.cells},
           {"repetitions", config.repetitions},
           {"warmup", config.warmup},
           {"full_cells", config.full_cells},
           {"seed", config.seed},
           {"scaling_capacities", config.scaling_capacities},
           {"scaling_slots", config.scaling_slots},
           {"scaling_passes", config.scaling_passes},
           {"threads", config.threads}};
}

void from_json(const Json& j, BenchConfig& config) {
  constexpr const char* where = "bench config";
  check_keys(j, {"kinds", "capacity", "in_channels", "channels", "cells",
                 "repetitions", "warmup", "full_cells", "seed",
                 "scaling_capacities", "scaling_slots", "scaling_passes", "threads"},
             where);
  if (j.contains("kinds")) {
    config.kinds.clear();
    for (const auto& name : read_req<std::vector<std::string>>(j, "kinds", where)) {
      config.kinds.push_back(descriptor_kind_from_string(name));
    }
  }
  read_opt(j, "capacity", config.capacity, where);
  read_opt(j, "in_channels", config.in_channels, where);
  read_opt(j, "channels", config.channels, where);
  read_opt(j, "cells", config.cells, where);
  read_opt(j, "repetitions", config.repetitions, where);
  read_opt(j, "warmup", config.warmup, where);
  read_opt(j, "full_cells", config.full_cells, where);
  read_opt(j, "seed", config.seed, where);
  read_opt(j, "scaling_capacities", config.scaling_capacities, where);
  read_opt(j, "scaling_slots", config.scaling_slots, where);
  read_opt(j, "scaling_passes", config.scaling_passes, where);
  read_opt(j, "threads", config.threads, where);
  validated([&] { config.validate(); });
}

namespace {

Json timing_json(const Timing& t) {
  return Json{{"median_ms", t.median_ms}, {"p90_ms", t.p90_ms},
              {"samples_ms", t.samples_ms}};
}

}  // namespace

void to_json(Json& j, const BenchReport& report) {
  Json kinds = Json::array();
  for (const auto& k : report.kinds) {
    kinds.push_back({{"kind", to_string(k.kind)},
                     {"full", timing_json(k.full)},
                     {"aggregation", timing_json(k.aggregation)}});
  }
  Json scaling = Json::array();
  for (const auto& p : report.scaling) {
    scaling.push_back({{"capacity", p.capacity},
                       {"weighted", timing_json(p.weighted)},
                       {"max", timing_json(p.max)},
                       {"ratio", p.ratio}});
  }
  j = Json{{"config", report.config},
           {"kinds", std::move(kinds)},
           {"full_ratio", report.full_ratio},
           {"aggregation_ratio", report.aggregation_ratio},
           {"scaling", std::move(scaling)},
           {"scaling_monotone", report.scaling_monotone},
           {"outputs_stable", report.outputs_stable}};
}

void require_known_keys(const Json& j, std::initializer_list<const char*> allowed,
                        const char* where) {
  check_keys(j, allowed, where);
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    fail(ErrorKind::kConfig, path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const Json& doc) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot open " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) fail(ErrorKind::kIo, "write failed: " + path.string());
}

}  // namespace pillarkit
