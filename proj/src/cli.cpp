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

#include "pillarkit/cli.hpp"

#include <chrono>
#include <fstream>
#include <functional>
#include <ostream>

#include "CLI11.hpp"
#include "pillarkit/parallel.hpp"
#include "pillarkit/pointcloud.hpp"
#include "pillarkit/properties.hpp"
#include "pillarkit/seed.hpp"
#include "pillarkit/serialization.hpp"

namespace pillarkit {

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

template <class T>
void take(const Json& j, const char* key, T& out, const char* where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const Json::exception& e) {
    fail(ErrorKind::kConfig, std::string(where) + "." + key + ": " + e.what());
  }
}

std::string take_string(const Json& j, const char* key, const char* where) {
  std::string s;
  take(j, key, s, where);
  return s;
}

void parse_descriptor(const Json& j, DescriptorSettings& d) {
  constexpr const char* where = "descriptor";
  require_known_keys(j, {"kind", "mlp_widths", "final_activation", "weight_init",
                         "weight_mode", "checkpoint"},
                     where);
  if (j.contains("kind")) d.kind = descriptor_kind_from_string(take_string(j, "kind", where));
  take(j, "mlp_widths", d.mlp_widths, where);
  if (j.contains("final_activation")) {
    d.final_activation = activation_from_string(take_string(j, "final_activation", where));
  }
  if (j.contains("weight_init")) {
    d.weight_init = weight_init_from_string(take_string(j, "weight_init", where));
  }
  if (j.contains("weight_mode")) {
    d.weight_mode = aggregation_mode_from_string(take_string(j, "weight_mode", where));
  }
  if (j.contains("checkpoint")) d.checkpoint = take_string(j, "checkpoint", where);
  if (d.mlp_widths.empty() && !d.checkpoint) {
    fail(ErrorKind::kConfig, "descriptor.mlp_widths must not be empty");
  }
}

void parse_check(const Json& j, CheckSettings& c) {
  constexpr const char* where = "check";
  require_known_keys(j, {"cells", "shuffles", "grad_configs", "tolerance"}, where);
  take(j, "cells", c.cells, where);
  take(j, "shuffles", c.shuffles, where);
  take(j, "grad_configs", c.grad_configs, where);
  take(j, "tolerance", c.tolerance, where);
  if (!(c.tolerance > 0.0)) fail(ErrorKind::kConfig, "check.tolerance must be positive");
}

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<std::string> descriptor;
  std::optional<std::string> out;
  std::optional<std::string> input;
  std::optional<std::string> resume;
  std::optional<std::size_t> stop_after;
  bool inject_fault = false;
};

// Config file first, then flags on top.
RunConfig resolve(const std::string& subcommand, const Flags& flags) {
  RunConfig rc;
  rc.subcommand = subcommand;
  Json doc = Json::object();
  if (!flags.config.empty()) doc = read_json_file(flags.config);
  require_known_keys(doc, {"seed", "grid", "descriptor", "toy", "train", "check",
                           "bench", "input", "out"},
                     "config");

  std::optional<std::uint64_t> seed;
  if (doc.contains("seed")) {
    std::uint64_t s = 0;
    take(doc, "seed", s, "config");
    seed = s;
  }
  if (flags.seed) seed = flags.seed;

  Json grid = doc.contains("grid") ? doc.at("grid") : Json::object();
  if (flags.mode) {
    if (!grid.is_object()) fail(ErrorKind::kConfig, "grid must be a JSON object");
    grid["mode"] = *flags.mode;
  }
  rc.grid = grid.get<GridSpec>();
  if (doc.contains("descriptor")) parse_descriptor(doc.at("descriptor"), rc.descriptor);
  if (doc.contains("toy")) rc.toy = doc.at("toy").get<ToyTaskSpec>();
  if (doc.contains("train")) rc.train = doc.at("train").get<TrainConfig>();
  if (doc.contains("check")) parse_check(doc.at("check"), rc.check);
  if (doc.contains("bench")) rc.bench = doc.at("bench").get<BenchConfig>();
  if (doc.contains("input")) rc.input = take_string(doc, "input", "config");
  if (doc.contains("out")) rc.out = take_string(doc, "out", "config");

  if (flags.descriptor) {
    const DescriptorKind kind = descriptor_kind_from_string(*flags.descriptor);
    rc.descriptor.kind = kind;
    rc.train.kind = kind;
    rc.bench.kinds = {kind};
    if (kind != DescriptorKind::kMax) rc.bench.kinds.push_back(DescriptorKind::kMax);
  }
  if (seed) {
    // One run seed drives every seeded component.
    rc.seed = *seed;
    rc.grid.subsample_seed = *seed;
    rc.toy.seed = *seed;
    rc.train.seed = *seed;
    rc.bench.seed = *seed;
  }
  if (flags.out) rc.out = *flags.out;
  if (flags.input) rc.input = *flags.input;
  if (flags.resume) rc.resume = fs::path(*flags.resume);
  if (flags.stop_after) rc.train.stop_after = *flags.stop_after;
  rc.inject_fault = flags.inject_fault;
  return rc;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create " + dir.string() + ": " + ec.message());
}

DescriptorParams featurize_params(const RunConfig& rc, std::size_t in_channels) {
  const auto& d = rc.descriptor;
  const auto capacity = static_cast<std::size_t>(rc.grid.capacity);
  DescriptorParams params;
  if (d.checkpoint) {
    params = read_json_file(*d.checkpoint).get<DescriptorParams>();
    if (params.mlp.in_channels() != in_channels) {
      fail(ErrorKind::kConfig, "checkpoint expects " +
                                   std::to_string(params.mlp.in_channels()) +
                                   " input channels, cells carry " +
                                   std::to_string(in_channels));
    }
    try {
      params.validate(capacity);
    } catch (const Error& e) {
      fail(ErrorKind::kConfig, e.what());
    }
    return params;
  }
  std::vector<Activation> acts(d.mlp_widths.size(), Activation::kRelu);
  acts.back() = d.final_activation;
  params.mlp = MlpParams::random(in_channels, d.mlp_widths, acts, mix_seed(rc.seed, 0xfea7));
  const std::size_t channels = params.mlp.out_channels();
  params.weights = AggregationWeights::unit_last(
      capacity, d.weight_mode, d.weight_mode == AggregationMode::kPerChannel ? channels : 0);
  if (d.weight_init == WeightInit::kUniform) {
    std::fill(params.weights.values.begin(), params.weights.values.end(),
              1.0 / static_cast<double>(capacity));
  }
  return params;
}

int cmd_featurize(const RunConfig& rc, std::ostream& out) {
  if (rc.input.empty()) fail(ErrorKind::kConfig, "featurize needs --input");
  const auto start = Clock::now();
  const PointCloud cloud = load_kitti_bin(rc.input);
  const std::size_t in_range = assign_cells(cloud, rc.grid).size();
  const CellBatch batch = build_cell_batch(cloud, rc.grid);
  const DescriptorParams params = featurize_params(rc, batch.channels);
  const std::size_t channels = params.mlp.out_channels();

  CellFeatures features(0, channels);
  if (!batch.empty()) {
    ForwardOptions opts;
    opts.threads = default_thread_count();
    features = descriptor_forward(params, batch, rc.descriptor.kind, opts).features;
  }
  const FeatureMap map = scatter_to_grid(features, batch.coords, rc.grid);

  ensure_dir(rc.out);
  write_feature_map(map, rc.out / "features.bin", rc.out / "features.json");
  std::size_t kept = 0;
  for (int n : batch.valid_count) kept += static_cast<std::size_t>(n);
  const double occupancy =
      static_cast<double>(batch.size()) / static_cast<double>(rc.grid.cell_count());
  const Json summary{
      {"points", cloud.size()},
      {"points_in_range", in_range},
      {"points_kept", kept},
      {"cells", batch.size()},
      {"grid_cells", rc.grid.cell_count()},
      {"occupancy", occupancy},
      {"mode", to_string(rc.grid.mode)},
      {"capacity", rc.grid.capacity},
      {"descriptor", to_string(rc.descriptor.kind)},
      {"channels", channels},
      {"shape", map.shape}};
  write_json_file(rc.out / "summary.json", summary);
  out << "featurize: " << cloud.size() << " points, " << batch.size() << " cells ("
      << occupancy * 100.0 << "% occupied), descriptor " << to_string(rc.descriptor.kind)
      << ", " << ms_since(start) << " ms\n"
      << "wrote " << (rc.out / "features.bin").string() << ", features.json, summary.json\n";
  return kExitOk;
}

int cmd_train_toy(const RunConfig& rc, std::ostream& out) {
  const auto data = build_toy_dataset(rc.toy);
  std::optional<TrainState> resume;
  if (rc.resume) resume = read_json_file(*rc.resume).get<TrainState>();
  const auto result = train_descriptor(data, rc.train, resume);

  ensure_dir(rc.out);
  std::string lines;
  for (const auto& e : result.metrics.evals) {
    Json line = e;
    line["kind"] = to_string(rc.train.kind);
    line["task"] = to_string(rc.toy.task);
    lines += line.dump() + "\n";
  }
  // A resumed run appends to the metrics of the run it continues.
  const fs::path metrics_path = rc.out / "metrics.jsonl";
  {
    std::ofstream f(metrics_path, rc.resume ? std::ios::app : std::ios::trunc);
    f << lines;
    if (!f) fail(ErrorKind::kIo, "cannot write " + metrics_path.string());
  }
  write_json_file(rc.out / "checkpoint.json", Json(result.state));

  const Json summary = result.metrics;
  out << "train-toy: " << to_string(rc.toy.task) << ", descriptor "
      << to_string(rc.train.kind) << ", step " << result.state.step << "/"
      << rc.train.steps << "\n";
  if (!result.metrics.evals.empty()) {
    const auto& last = result.metrics.evals.back();
    out << (rc.toy.task == ToyTask::kEqualExtremes ? "val accuracy " : "val mse ")
        << last.val_metric << ", train loss " << last.train_loss << "\n";
  }
  out << summary.dump() << "\n";
  return kExitOk;
}

SuiteOptions suite_options(const RunConfig& rc) {
  SuiteOptions o;
  o.seed = rc.seed;
  o.cells = rc.check.cells;
  o.shuffles = rc.check.shuffles;
  o.grad_configs = rc.check.grad_configs;
  o.fd.tolerance = rc.check.tolerance;
  if (rc.inject_fault) o.forward = unsorted_forward_for_fault_injection();
  return o;
}

int report_suites(const RunConfig& rc, const std::vector<SuiteResult>& results,
                  const char* file, std::ostream& out) {
  bool pass = true;
  Json suites = Json::array();
  for (const auto& r : results) {
    pass = pass && r.pass();
    suites.push_back({{"name", r.name},
                      {"pass", r.pass()},
                      {"cases", r.cases},
                      {"failures", r.failures},
                      {"seconds", r.seconds},
                      {"detail", r.detail}});
    out << (r.pass() ? "PASS " : "FAIL ") << r.name << ": " << r.cases << " cases, "
        << r.failures << " failures, " << r.seconds << " s";
    if (!r.detail.empty()) out << " (" << r.detail << ")";
    out << "\n";
  }
  ensure_dir(rc.out);
  write_json_file(rc.out / file, Json{{"suites", suites}, {"pass", pass}});
  return pass ? kExitOk : kExitCheckFailure;
}

int cmd_check_grad(const RunConfig& rc, std::ostream& out) {
  const auto o = suite_options(rc);
  return report_suites(rc, {check_gradients(o), check_backward_equivariance(o)},
                       "check_grad.json", out);
}

int cmd_prop_test(const RunConfig& rc, std::ostream& out) {
  const auto o = suite_options(rc);
  return report_suites(rc,
                       {check_permutation_invariance(o), check_max_special_case(o),
                        check_sorted_matrix_contract(o), check_mean_consistency(o),
                        check_backward_equivariance(o), check_gradients(o)},
                       "check.json", out);
}

int cmd_bench(const RunConfig& rc, std::ostream& out) {
  const auto report = bench_descriptor(rc.bench);
  ensure_dir(rc.out);
  write_json_file(rc.out / "bench.json", Json(report));
  for (const auto& k : report.kinds) {
    out << to_string(k.kind) << ": full median " << k.full.median_ms << " ms (p90 "
        << k.full.p90_ms << "), aggregation median " << k.aggregation.median_ms
        << " ms (p90 " << k.aggregation.p90_ms << ")\n";
  }
  if (report.full_ratio > 0.0) {
    out << "weighted/max: full " << report.full_ratio << ", aggregation "
        << report.aggregation_ratio << "\n";
  }
  for (const auto& p : report.scaling) {
    out << "N=" << p.capacity << " aggregation weighted/max " << p.ratio << "\n";
  }
  out << "scaling ratio monotone: " << (report.scaling_monotone ? "yes" : "no") << "\n";
  return kExitOk;
}

}  // namespace

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument:
    case ErrorKind::kConfig:
      return kExitConfig;
    case ErrorKind::kIo:
      return kExitIo;
    case ErrorKind::kCheckFailure:
      return kExitCheckFailure;
    case ErrorKind::kDivergence:
      return kExitDivergence;
  }
  return kExitUnexpected;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Point-cloud cell descriptors: featurize, train, check, bench", "pillarkit"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  Flags flags;
  app.add_option("--config", flags.config, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--seed", flags.seed, "Seed for every seeded component");
  app.add_option("--mode", flags.mode, "Grid mode")
      ->check(CLI::IsMember({"pillar", "voxel"}));
  app.add_option("--descriptor", flags.descriptor, "Aggregator")
      ->check(CLI::IsMember({"weighted", "max", "mean"}));
  app.add_option("--out", flags.out, "Output directory");

  auto* featurize = app.add_subcommand("featurize", "Point cloud .bin to a dense feature map");
  featurize->add_option("--input,input", flags.input, "KITTI .bin point cloud");
  auto* train = app.add_subcommand("train-toy", "Train on a synthetic toy task");
  train->add_option("--resume", flags.resume, "Checkpoint to continue from");
  train->add_option("--stop-after", flags.stop_after, "Stop after this many steps in total");
  auto* grad = app.add_subcommand("check-grad", "Finite-difference gradient checks");
  auto* prop = app.add_subcommand("prop-test", "Invariance suites and gradient checks");
  prop->alias("check");
  prop->add_flag("--inject-fault", flags.inject_fault)->group("");
  auto* bench = app.add_subcommand("bench", "Time the aggregators");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    const RunConfig rc = resolve(name, flags);
    if (featurize->parsed()) return cmd_featurize(rc, out);
    if (train->parsed()) return cmd_train_toy(rc, out);
    if (grad->parsed()) return cmd_check_grad(rc, out);
    if (prop->parsed()) return cmd_prop_test(rc, out);
    if (bench->parsed()) return cmd_bench(rc, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "unexpected error: " << e.what() << "\n";
    return kExitUnexpected;
  }
  return kExitUnexpected;
}

}  // namespace pillarkit
