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

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pillarkit {

/// A flat scene-level point set: `size()` points with `channels()` values
/// each, stored row-major. Spatial channels x, y, z always come first.
class PointCloud {
 public:
  PointCloud() : PointCloud(default_channel_names()) {}
  explicit PointCloud(std::vector<std::string> channel_names,
                      std::string source = {});

  static std::vector<std::string> default_channel_names() {
    return {"x", "y", "z", "reflectance"};
  }

  std::size_t size() const { return values_.size() / channels(); }
  std::size_t channels() const { return channel_names_.size(); }
  bool empty() const { return values_.empty(); }

  std::span<const double> point(std::size_t i) const {
    return {values_.data() + i * channels(), channels()};
  }
  std::span<double> point(std::size_t i) {
    return {values_.data() + i * channels(), channels()};
  }

  /// Appends one point; throws on wrong arity or non-finite values.
  void push_back(std::span<const double> values);
  void reserve(std::size_t points) { values_.reserve(points * channels()); }

  std::span<const double> values() const { return values_; }
  const std::vector<std::string>& channel_names() const {
    return channel_names_;
  }
  const std::string& source() const { return source_; }
  void set_source(std::string source) { source_ = std::move(source); }

  friend bool operator==(const PointCloud&, const PointCloud&) = default;

 private:
  std::vector<std::string> channel_names_;
  std::string source_;
  std::vector<double> values_;
};

/// Reads a KITTI velodyne scan: headerless records of four little-endian
/// float32 values (x, y, z, reflectance).
PointCloud load_kitti_bin(const std::filesystem::path& path);

/// Writes the inverse of load_kitti_bin. Requires exactly four channels.
void write_kitti_bin(const PointCloud& cloud,
                     const std::filesystem::path& path);

enum class GeneratorKind { kUniformBox, kGaussianClusters, kEqualExtremesPair };

struct Box3 {
  std::array<double, 3> min{0.0, 0.0, 0.0};
  std::array<double, 3> max{1.0, 1.0, 1.0};

  bool contains(std::span<const double> xyz) const {
    for (std::size_t a = 0; a < 3; ++a) {
      if (xyz[a] < min[a] || xyz[a] > max[a]) return false;
    }
    return true;
  }
};

struct SyntheticCloudSpec {
  GeneratorKind kind = GeneratorKind::kUniformBox;
  Box3 extent;
  std::size_t count = 1;
  std::uint64_t seed = 0;
  // Class selector for kEqualExtremesPair (0 or 1); informational otherwise.
  std::optional<int> label;
  // kGaussianClusters only. When `centers` is empty, `cluster_count`
  // centers are drawn uniformly inside the extent.
  std::vector<std::array<double, 3>> centers;
  std::size_t cluster_count = 1;
  double sigma = 0.1;

  void validate() const;
};

/// Deterministic in `spec`. Every generated point lies inside the extent and
/// has a reflectance in [0, 1].
///
/// kEqualExtremesPair: the first two points are anchors sitting at the
/// extent's min and max corners (reflectance 0 and 1), so both classes share
/// their per-channel extremes. Interior points are uniform for class 0 and
/// split evenly between bands hugging each extreme for class 1.
PointCloud generate_synthetic(const SyntheticCloudSpec& spec);

}  // namespace pillarkit
