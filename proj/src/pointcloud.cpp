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

#include "pillarkit/pointcloud.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include "pillarkit/error.hpp"

namespace pillarkit {

namespace {

constexpr std::size_t kKittiChannels = 4;
constexpr std::size_t kKittiRecordBytes = kKittiChannels * sizeof(float);

// Band occupied by class-1 interior points next to each extreme, as a
// fraction of the edge length.
constexpr double kExtremeBand = 0.15;

float decode_le_float(const unsigned char* bytes) {
  std::uint32_t bits = 0;
  for (int b = 3; b >= 0; --b) bits = (bits << 8) | bytes[b];
  return std::bit_cast<float>(bits);
}

void encode_le_float(float value, unsigned char* bytes) {
  auto bits = std::bit_cast<std::uint32_t>(value);
  for (int b = 0; b < 4; ++b) {
    bytes[b] = static_cast<unsigned char>(bits & 0xffu);
    bits >>= 8;
  }
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace

PointCloud::PointCloud(std::vector<std::string> channel_names,
                       std::string source)
    : channel_names_(std::move(channel_names)), source_(std::move(source)) {
  require(channel_names_.size() >= 3,
          "point cloud needs at least the x, y, z channels");
}

void PointCloud::push_back(std::span<const double> values) {
  require(values.size() == channels(), "point has " +
                                           std::to_string(values.size()) +
                                           " values, cloud expects " +
                                           std::to_string(channels()));
  for (double v : values) {
    require(std::isfinite(v), "non-finite value in point " +
                                  std::to_string(size()));
  }
  values_.insert(values_.end(), values.begin(), values.end());
}

PointCloud load_kitti_bin(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (in.bad()) fail(ErrorKind::kIo, "read failed: " + path.string());
  if (bytes.size() % kKittiRecordBytes != 0) {
    fail(ErrorKind::kIo, path.string() + ": length " +
                             std::to_string(bytes.size()) +
                             " is not a multiple of 16 bytes");
  }

  PointCloud cloud(PointCloud::default_channel_names(), path.string());
  const std::size_t count = bytes.size() / kKittiRecordBytes;
  cloud.reserve(count);
  std::array<double, kKittiChannels> point{};
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t c = 0; c < kKittiChannels; ++c) {
      const float v =
          decode_le_float(bytes.data() + i * kKittiRecordBytes + c * 4);
      if (!std::isfinite(v)) {
        fail(ErrorKind::kIo, path.string() + ": non-finite value at point " +
                                 std::to_string(i) + ", channel " +
                                 std::to_string(c));
      }
      point[c] = static_cast<double>(v);
    }
    cloud.push_back(point);
  }
  return cloud;
}

void write_kitti_bin(const PointCloud& cloud,
                     const std::filesystem::path& path) {
  require(cloud.channels() == kKittiChannels,
          "KITTI records need exactly 4 channels, cloud has " +
              std::to_string(cloud.channels()));
  std::vector<unsigned char> bytes(cloud.size() * kKittiRecordBytes);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto p = cloud.point(i);
    for (std::size_t c = 0; c < kKittiChannels; ++c) {
      const auto narrowed = static_cast<float>(p[c]);
      require(std::isfinite(narrowed),
              "point " + std::to_string(i) +
                  " is not representable in single precision");
      encode_le_float(narrowed, bytes.data() + i * kKittiRecordBytes + c * 4);
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::kIo, "write failed: " + path.string());
}

void SyntheticCloudSpec::validate() const {
  require(count >= 1, "synthetic cloud needs at least one point");
  for (std::size_t a = 0; a < 3; ++a) {
    require(std::isfinite(extent.min[a]) && std::isfinite(extent.max[a]) &&
                extent.max[a] > extent.min[a],
            "extent box must have strictly positive edge lengths");
  }
  if (kind == GeneratorKind::kEqualExtremesPair) {
    require(count >= 2, "equal-extremes clouds need the two anchor points");
    require(label.has_value() && (*label == 0 || *label == 1),
            "equal-extremes clouds need label 0 or 1");
  }
  if (kind == GeneratorKind::kGaussianClusters) {
    require(sigma >= 0.0 && std::isfinite(sigma), "sigma must be >= 0");
    require(!centers.empty() || cluster_count >= 1,
            "gaussian clusters need at least one center");
    for (const auto& c : centers) {
      require(extent.contains(c), "cluster center outside the extent");
    }
  }
}

PointCloud generate_synthetic(const SyntheticCloudSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  PointCloud cloud(PointCloud::default_channel_names(),
                   "synthetic:seed=" + std::to_string(spec.seed));
  cloud.reserve(spec.count);
  const auto& box = spec.extent;
  std::array<double, 4> p{};

  switch (spec.kind) {
    case GeneratorKind::kUniformBox:
      for (std::size_t i = 0; i < spec.count; ++i) {
        for (std::size_t a = 0; a < 3; ++a) {
          p[a] = uniform(rng, box.min[a], box.max[a]);
        }
        p[3] = uniform(rng, 0.0, 1.0);
        cloud.push_back(p);
      }
      break;

    case GeneratorKind::kGaussianClusters: {
      auto centers = spec.centers;
      if (centers.empty()) {
        centers.resize(spec.cluster_count);
        for (auto& c : centers) {
          for (std::size_t a = 0; a < 3; ++a) {
            c[a] = uniform(rng, box.min[a], box.max[a]);
          }
        }
      }
      std::normal_distribution<double> noise(0.0, 1.0);
      for (std::size_t i = 0; i < spec.count; ++i) {
        const auto& c = centers[i % centers.size()];
        for (std::size_t a = 0; a < 3; ++a) {
          const double v = c[a] + spec.sigma * noise(rng);
          p[a] = std::clamp(v, box.min[a], box.max[a]);
        }
        p[3] = uniform(rng, 0.0, 1.0);
        cloud.push_back(p);
      }
      break;
    }

    case GeneratorKind::kEqualExtremesPair: {
      std::array<double, 4> lo{box.min[0], box.min[1], box.min[2], 0.0};
      std::array<double, 4> hi{box.max[0], box.max[1], box.max[2], 1.0};
      const std::size_t interior = spec.count - 2;
      std::vector<double> values(spec.count * 4);
      for (std::size_t c = 0; c < 4; ++c) {
        values[0 * 4 + c] = lo[c];
        values[1 * 4 + c] = hi[c];
      }
      // Interior draws use their own stream so both classes of a pair share
      // nothing but the anchors.
      std::mt19937_64 interior_rng(spec.seed ^ (0x9e3779b97f4a7c15ull *
                                                (1 + *spec.label)));
      std::vector<std::size_t> order(interior);
      for (std::size_t c = 0; c < 4; ++c) {
        const double band = kExtremeBand * (hi[c] - lo[c]);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), interior_rng);
        for (std::size_t j = 0; j < interior; ++j) {
          double v;
          if (*spec.label == 0) {
            v = uniform(interior_rng, lo[c], hi[c]);
          } else if (order[j] < interior / 2) {
            v = lo[c] + band * uniform(interior_rng, 0.0, 1.0);
          } else {
            v = hi[c] - band * uniform(interior_rng, 0.0, 1.0);
          }
          values[(2 + j) * 4 + c] = v;
        }
      }
      for (std::size_t i = 0; i < spec.count; ++i) {
        cloud.push_back(std::span<const double>(values.data() + i * 4, 4));
      }
      break;
    }
  }
  return cloud;
}

}  // namespace pillarkit
