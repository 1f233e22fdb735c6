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

#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "pillarkit/cli.hpp"
#include "pillarkit/pointcloud.hpp"
#include "pillarkit/serialization.hpp"

using namespace pillarkit;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "pillarkit");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

class Workspace {
 public:
  Workspace() {
    static int counter = 0;
    dir_ = fs::temp_directory_path() /
           ("pillarkit_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(dir_);
  }
  ~Workspace() { fs::remove_all(dir_); }
  fs::path operator/(const std::string& name) const { return dir_ / name; }

 private:
  fs::path dir_;
};

// Random cloud on float-representable coordinates inside an 8 m square.
void write_cloud(const fs::path& path, std::size_t points, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> xy(-0.5f, 8.5f), z(-3.5f, 1.5f), refl(0.0f, 1.0f);
  PointCloud cloud;
  for (std::size_t i = 0; i < points; ++i) {
    const double p[4] = {xy(rng), xy(rng), z(rng), refl(rng)};
    cloud.push_back(p);
  }
  write_kitti_bin(cloud, path);
}

// Small pillar grid so feature maps stay tiny.
void write_config(const fs::path& path, const std::string& extra = "") {
  std::ofstream f(path);
  f << R"({"grid": {"range_min": [0, 0, -3], "range_max": [8, 8, 1],
           "cell_size": [0.5, 0.5, 4], "capacity": 8, "max_cells": 200},
          "descriptor": {"mlp_widths": [16]},
          "check": {"cells": 150, "shuffles": 4, "grad_configs": 20},
          "bench": {"cells": 100, "repetitions": 2, "capacity": 8,
                    "scaling_capacities": [4, 8], "scaling_slots": 64,
                    "scaling_passes": 1},
          "toy": {"cells_per_class": 60},
          "train": {"steps": 120, "eval_every": 40})"
    << extra << "}";
}

}  // namespace

TEST_CASE("featurize writes a map, header and summary deterministically") {
  Workspace ws;
  write_cloud(ws / "cloud.bin", 3000, 1);
  write_config(ws / "config.json");
  const std::string cfg = (ws / "config.json").string();
  const std::string in = (ws / "cloud.bin").string();

  const auto a = run({"featurize", in, "--config", cfg, "--out", (ws / "a").string()});
  REQUIRE(a.code == kExitOk);
  const auto b = run({"featurize", "--input", in, "--config", cfg, "--out", (ws / "b").string()});
  REQUIRE(b.code == kExitOk);
  for (const char* f : {"features.bin", "features.json", "summary.json"}) {
    CHECK(slurp(ws / "a" / f) == slurp(ws / "b" / f));
  }
  const auto summary = read_json_file(ws / "a" / "summary.json");
  CHECK(summary.at("cells").get<int>() > 0);
  CHECK(summary.at("shape") == Json::parse("[16, 16, 16]"));
  CHECK_FALSE(summary.contains("seconds"));
  const auto map = read_feature_map(ws / "a" / "features.bin", ws / "a" / "features.json");
  CHECK(map.data.size() == 16 * 16 * 16);
}

TEST_CASE("featurize output does not depend on the worker count") {
  Workspace ws;
  write_cloud(ws / "cloud.bin", 2000, 2);
  write_config(ws / "config.json");
  const std::string cfg = (ws / "config.json").string();
  const std::string in = (ws / "cloud.bin").string();
  ::setenv("PILLARKIT_THREADS", "1", 1);
  REQUIRE(run({"featurize", in, "--config", cfg, "--out", (ws / "one").string()}).code == 0);
  ::setenv("PILLARKIT_THREADS", "3", 1);
  REQUIRE(run({"featurize", in, "--config", cfg, "--out", (ws / "three").string()}).code == 0);
  ::unsetenv("PILLARKIT_THREADS");
  CHECK(slurp(ws / "one" / "features.bin") == slurp(ws / "three" / "features.bin"));
}

TEST_CASE("featurize with unit-last weights matches max-pooling file for file") {
  Workspace ws;
  write_cloud(ws / "cloud.bin", 3000, 3);
  write_config(ws / "config.json");
  const std::string cfg = (ws / "config.json").string();
  const std::string in = (ws / "cloud.bin").string();
  REQUIRE(run({"featurize", in, "--config", cfg, "--descriptor", "weighted", "--out",
               (ws / "w").string()}).code == 0);
  REQUIRE(run({"featurize", in, "--config", cfg, "--descriptor", "max", "--out",
               (ws / "m").string()}).code == 0);
  CHECK(slurp(ws / "w" / "features.bin") == slurp(ws / "m" / "features.bin"));
  CHECK(slurp(ws / "w" / "features.json") == slurp(ws / "m" / "features.json"));
}

TEST_CASE("featurize on an empty cloud writes an all-zero map") {
  Workspace ws;
  { std::ofstream f(ws / "empty.bin", std::ios::binary); }
  write_config(ws / "config.json");
  const auto r = run({"featurize", (ws / "empty.bin").string(), "--config",
                      (ws / "config.json").string(), "--out", (ws / "o").string()});
  REQUIRE(r.code == kExitOk);
  CHECK(read_json_file(ws / "o" / "summary.json").at("cells") == 0);
  const auto map = read_feature_map(ws / "o" / "features.bin", ws / "o" / "features.json");
  CHECK(std::all_of(map.data.begin(), map.data.end(), [](double v) { return v == 0.0; }));
}

TEST_CASE("featurize loads a descriptor checkpoint") {
  Workspace ws;
  write_cloud(ws / "cloud.bin", 500, 4);
  DescriptorParams params{MlpParams::identity(9), AggregationWeights::unit_last(8)};
  write_json_file(ws / "desc.json", Json(params));
  write_config(ws / "config.json",
               R"(, "input": ")" + (ws / "cloud.bin").string() + R"(")");
  std::ofstream(ws / "ckpt.json")
      << R"({"descriptor": {"checkpoint": ")" << (ws / "desc.json").string()
      << R"("}, "grid": {"range_min": [0, 0, -3], "range_max": [8, 8, 1],
             "cell_size": [0.5, 0.5, 4], "capacity": 8, "max_cells": 200}})";
  const auto r = run({"featurize", (ws / "cloud.bin").string(), "--config",
                      (ws / "ckpt.json").string(), "--out", (ws / "o").string()});
  REQUIRE(r.code == kExitOk);
  CHECK(read_json_file(ws / "o" / "summary.json").at("channels") == 9);

  params = DescriptorParams{MlpParams::identity(4), AggregationWeights::unit_last(8)};
  write_json_file(ws / "desc.json", Json(params));
  CHECK(run({"featurize", (ws / "cloud.bin").string(), "--config",
             (ws / "ckpt.json").string(), "--out", (ws / "o").string()}).code == kExitConfig);
}

TEST_CASE("train-toy writes metrics lines and a checkpoint") {
  Workspace ws;
  write_config(ws / "config.json");
  const std::string cfg = (ws / "config.json").string();
  const auto r = run({"train-toy", "--config", cfg, "--out", (ws / "w").string()});
  REQUIRE(r.code == kExitOk);
  std::istringstream lines(slurp(ws / "w" / "metrics.jsonl"));
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) {
    const auto j = Json::parse(line);
    CHECK(j.at("kind") == "weighted");
    CHECK(j.contains("val_metric"));
    ++count;
  }
  CHECK(count == 4);
  CHECK(read_json_file(ws / "w" / "checkpoint.json").at("step") == 120);

  const auto m = run({"train-toy", "--config", cfg, "--descriptor", "max", "--out",
                      (ws / "m").string()});
  REQUIRE(m.code == kExitOk);
  CHECK(m.out.find("descriptor max") != std::string::npos);
}

TEST_CASE("resumed train-toy reproduces the uninterrupted run") {
  Workspace ws;
  write_config(ws / "config.json");
  const std::string cfg = (ws / "config.json").string();
  REQUIRE(run({"train-toy", "--config", cfg, "--out", (ws / "full").string()}).code == 0);
  REQUIRE(run({"train-toy", "--config", cfg, "--stop-after", "50", "--out",
               (ws / "split").string()}).code == 0);
  REQUIRE(run({"train-toy", "--config", cfg, "--resume",
               (ws / "split" / "checkpoint.json").string(), "--out",
               (ws / "split").string()}).code == 0);
  CHECK(slurp(ws / "full" / "checkpoint.json") == slurp(ws / "split" / "checkpoint.json"));
  CHECK(slurp(ws / "full" / "metrics.jsonl") == slurp(ws / "split" / "metrics.jsonl"));
}

TEST_CASE("the seed flag overrides the config seed") {
  Workspace ws;
  write_config(ws / "a.json", R"(, "seed": 2)");
  write_config(ws / "b.json", R"(, "seed": 1)");
  REQUIRE(run({"train-toy", "--config", (ws / "a.json").string(), "--out",
               (ws / "a").string()}).code == 0);
  REQUIRE(run({"train-toy", "--config", (ws / "b.json").string(), "--seed", "2", "--out",
               (ws / "b").string()}).code == 0);
  REQUIRE(run({"train-toy", "--config", (ws / "b.json").string(), "--out",
               (ws / "c").string()}).code == 0);
  CHECK(slurp(ws / "a" / "checkpoint.json") == slurp(ws / "b" / "checkpoint.json"));
  CHECK(slurp(ws / "a" / "checkpoint.json") != slurp(ws / "c" / "checkpoint.json"));
}

TEST_CASE("check passes on the stock build and lists every suite") {
  Workspace ws;
  write_config(ws / "config.json");
  const auto r = run({"check", "--config", (ws / "config.json").string(), "--out",
                      (ws / "o").string()});
  CHECK(r.code == kExitOk);
  const auto report = read_json_file(ws / "o" / "check.json");
  CHECK(report.at("pass") == true);
  CHECK(report.at("suites").size() == 6);
  for (const auto& s : report.at("suites")) {
    CHECK(s.at("pass") == true);
    CHECK(s.at("cases").get<int>() > 0);
    CHECK(s.at("failures") == 0);
  }
  const auto alias = run({"prop-test", "--config", (ws / "config.json").string(), "--out",
                          (ws / "p").string()});
  CHECK(alias.code == kExitOk);
}

TEST_CASE("check with the injected fault fails with the check exit code") {
  Workspace ws;
  write_config(ws / "config.json");
  const auto r = run({"check", "--inject-fault", "--config", (ws / "config.json").string(),
                      "--out", (ws / "o").string()});
  CHECK(r.code == kExitCheckFailure);
  CHECK(r.out.find("FAIL permutation_invariance") != std::string::npos);
  CHECK(read_json_file(ws / "o" / "check.json").at("pass") == false);
}

TEST_CASE("check-grad reports the gradient suite") {
  Workspace ws;
  write_config(ws / "config.json");
  const auto r = run({"check-grad", "--config", (ws / "config.json").string(), "--out",
                      (ws / "o").string()});
  CHECK(r.code == kExitOk);
  CHECK(read_json_file(ws / "o" / "check_grad.json").at("suites")[0].at("name") ==
        "gradient_check");
}

TEST_CASE("bench writes a JSON report") {
  Workspace ws;
  write_config(ws / "config.json");
  const auto r = run({"bench", "--config", (ws / "config.json").string(), "--out",
                      (ws / "o").string()});
  REQUIRE(r.code == kExitOk);
  const auto report = read_json_file(ws / "o" / "bench.json");
  CHECK(report.at("kinds").size() == 3);
  CHECK(report.at("outputs_stable") == true);
  CHECK(report.at("scaling").size() == 2);
}

TEST_CASE("failures map to distinct exit codes") {
  Workspace ws;
  write_config(ws / "config.json");
  const std::string cfg = (ws / "config.json").string();
  CHECK(run({"featurize", (ws / "missing.bin").string(), "--config", cfg}).code == kExitIo);
  CHECK(run({"featurize", "--config", cfg}).code == kExitConfig);
  CHECK(run({"bogus"}).code == kExitConfig);
  CHECK(run({"train-toy", "--descriptor", "median"}).code == kExitConfig);

  std::ofstream(ws / "bad.json") << R"({"grid": {"capacity": 0}})";
  CHECK(run({"train-toy", "--config", (ws / "bad.json").string()}).code == kExitConfig);
  std::ofstream(ws / "typo.json") << R"({"trian": {}})";
  const auto typo = run({"train-toy", "--config", (ws / "typo.json").string()});
  CHECK(typo.code == kExitConfig);
  CHECK(typo.err.find("trian") != std::string::npos);

  std::ofstream(ws / "diverge.json")
      << R"({"toy": {"cells_per_class": 20},
             "train": {"optimizer": "sgd", "learning_rate": 1e300, "steps": 20}})";
  const auto d = run({"train-toy", "--config", (ws / "diverge.json").string(), "--out",
                      (ws / "d").string()});
  CHECK(d.code == kExitDivergence);
  CHECK(d.err.find("step") != std::string::npos);

  // The default voxel grid is too large to hold as a dense 64-channel map.
  write_cloud(ws / "cloud.bin", 10, 5);
  CHECK(run({"featurize", (ws / "cloud.bin").string(), "--mode", "voxel", "--out",
             (ws / "v").string()}).code == kExitConfig);
}
