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

#include "pillarkit/grid.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <random>

#include "json.hpp"
#include "pillarkit/error.hpp"
#include "pillarkit/seed.hpp"

namespace pillarkit {

namespace {

bool is_gridded_axis(const GridSpec& spec, std::size_t axis) {
  return axis < 2 || spec.mode == GridMode::kVoxel;
}

}  // namespace

GridSpec GridSpec::pillar_default() { return GridSpec{}; }

GridSpec GridSpec::voxel_default() {
  GridSpec spec;
  spec.mode = GridMode::kVoxel;
  spec.range_min = {0.0, -40.0, -3.0};
  spec.range_max = {70.4, 40.0, 1.0};
  spec.cell_size = {0.05, 0.05, 0.1};
  spec.capacity = 5;
  spec.max_cells = 40000;
  return spec;
}

void GridSpec::validate() const {
  for (std::size_t a = 0; a < 3; ++a) {
    require(std::isfinite(range_min[a]) && std::isfinite(range_max[a]) &&
                range_max[a] > range_min[a],
            "grid range_max must exceed range_min on every axis");
    if (is_gridded_axis(*this, a)) {
      require(std::isfinite(cell_size[a]) && cell_size[a] > 0.0,
              "grid cell sizes must be positive");
      require(std::floor((range_max[a] - range_min[a]) / cell_size[a]) >= 1.0,
              "grid range must hold at least one whole cell per axis");
    }
  }
  require(capacity >= 1, "cell capacity must be >= 1");
  require(max_cells >= 1, "max_cells must be >= 1");
}

std::array<int, 3> GridSpec::dims() const {
  std::array<int, 3> d{1, 1, 1};
  for (std::size_t a = 0; a < 3; ++a) {
    if (is_gridded_axis(*this, a)) {
      d[a] = static_cast<int>(
          std::floor((range_max[a] - range_min[a]) / cell_size[a]));
    }
  }
  return d;
}

std::size_t GridSpec::cell_count() const {
  const auto d = dims();
  return static_cast<std::size_t>(d[0]) * d[1] * d[2];
}

std::size_t GridSpec::linear_index(const CellCoord& c) const {
  const auto d = dims();
  return (static_cast<std::size_t>(c.z) * d[1] + c.y) * d[0] + c.x;
}

bool GridSpec::in_bounds(const CellCoord& c) const {
  const auto d = dims();
  return c.x >= 0 && c.x < d[0] && c.y >= 0 && c.y < d[1] && c.z >= 0 &&
         c.z < d[2];
}

std::vector<CellAssignment> assign_cells(const PointCloud& cloud,
                                         const GridSpec& spec) {
  spec.validate();
  const auto d = spec.dims();
  std::vector<CellAssignment> out;
  out.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto p = cloud.point(i);
    std::array<int, 3> idx{0, 0, 0};
    bool inside = true;
    for (std::size_t a = 0; a < 3 && inside; ++a) {
      if (p[a] < spec.range_min[a] || p[a] >= spec.range_max[a]) {
        inside = false;
      } else if (is_gridded_axis(spec, a)) {
        const double cell = std::floor((p[a] - spec.range_min[a]) /
                                       spec.cell_size[a]);
        if (cell >= d[a]) {
          inside = false;
        } else {
          idx[a] = static_cast<int>(cell);
        }
      }
    }
    if (inside) out.push_back({i, CellCoord{idx[0], idx[1], idx[2]}});
  }
  return out;
}

CellBatch::CellBatch(std::size_t cells, std::size_t capacity,
                     std::size_t channels, GridSpec spec)
    : capacity(capacity),
      channels(channels),
      data(cells * capacity * channels, 0.0),
      valid_count(cells, 0),
      coords(cells),
      spec(std::move(spec)) {}

void CellBatch::validate() const {
  require(capacity >= 1 && channels >= 1, "cell batch has empty slot shape");
  require(data.size() == size() * cell_stride(),
          "cell batch data size does not match its shape");
  require(coords.size() == size(), "one coordinate per cell required");
  std::vector<std::size_t> linear;
  linear.reserve(size());
  for (std::size_t k = 0; k < size(); ++k) {
    const int n = valid_count[k];
    require(n >= 1 && static_cast<std::size_t>(n) <= capacity,
            "cell " + std::to_string(k) + " has valid_count " +
                std::to_string(n) + " outside [1, capacity]");
    const auto slots = cell(k);
    for (std::size_t i = n * channels; i < slots.size(); ++i) {
      require(slots[i] == 0.0 && !std::signbit(slots[i]),
              "cell " + std::to_string(k) + " has a non-zero padding slot");
    }
    for (double v : slots.first(n * channels)) {
      require(std::isfinite(v), "cell " + std::to_string(k) +
                                    " holds a non-finite value");
    }
    require(spec.in_bounds(coords[k]),
            "cell " + std::to_string(k) + " coordinate outside the grid");
    linear.push_back(spec.linear_index(coords[k]));
  }
  std::sort(linear.begin(), linear.end());
  require(std::adjacent_find(linear.begin(), linear.end()) == linear.end(),
          "cell batch coordinates are not unique");
}

CellBatch build_cell_batch(const PointCloud& cloud, const GridSpec& spec) {
  auto assignments = assign_cells(cloud, spec);
  const std::size_t capacity = static_cast<std::size_t>(spec.capacity);
  const std::size_t raw = cloud.channels();
  const std::size_t channels = spec.decorated_channels(raw);

  struct Group {
    std::size_t linear;
    CellCoord coord;
    std::size_t begin;
    std::size_t end;
  };
  // Stable sort keeps cloud order inside each cell.
  std::stable_sort(assignments.begin(), assignments.end(),
                   [&](const CellAssignment& a, const CellAssignment& b) {
                     return spec.linear_index(a.cell) <
                            spec.linear_index(b.cell);
                   });
  std::vector<Group> groups;
  for (std::size_t i = 0; i < assignments.size();) {
    const std::size_t linear = spec.linear_index(assignments[i].cell);
    std::size_t j = i + 1;
    while (j < assignments.size() &&
           spec.linear_index(assignments[j].cell) == linear) {
      ++j;
    }
    groups.push_back({linear, assignments[i].cell, i, j});
    i = j;
  }

  if (groups.size() > static_cast<std::size_t>(spec.max_cells)) {
    std::stable_sort(groups.begin(), groups.end(),
                     [](const Group& a, const Group& b) {
                       return (a.end - a.begin) > (b.end - b.begin);
                     });
    groups.resize(static_cast<std::size_t>(spec.max_cells));
    std::sort(groups.begin(), groups.end(),
              [](const Group& a, const Group& b) { return a.linear < b.linear; });
  }

  CellBatch batch(groups.size(), capacity, channels, spec);
  std::vector<std::size_t> kept;
  for (std::size_t k = 0; k < groups.size(); ++k) {
    const auto& g = groups[k];
    kept.clear();
    for (std::size_t i = g.begin; i < g.end; ++i) {
      kept.push_back(assignments[i].point_index);
    }
    if (kept.size() > capacity) {
      if (spec.overflow == OverflowPolicy::kKeepFirst) {
        kept.resize(capacity);
      } else {
        std::vector<std::size_t> sampled;
        sampled.reserve(capacity);
        std::mt19937_64 rng(mix_seed(spec.subsample_seed, g.linear));
        std::sample(kept.begin(), kept.end(), std::back_inserter(sampled),
                    capacity, rng);
        kept = std::move(sampled);
      }
    }

    const std::size_t n = kept.size();
    batch.valid_count[k] = static_cast<int>(n);
    batch.coords[k] = g.coord;
    auto slots = batch.cell(k);
    std::array<double, 3> mean{0.0, 0.0, 0.0};
    for (std::size_t s = 0; s < n; ++s) {
      const auto p = cloud.point(kept[s]);
      std::copy(p.begin(), p.end(), slots.begin() + s * channels);
      for (std::size_t a = 0; a < 3; ++a) mean[a] += p[a];
    }
    if (!spec.decorate) continue;

    for (auto& m : mean) m /= static_cast<double>(n);
    const double center_x =
        spec.range_min[0] + (g.coord.x + 0.5) * spec.cell_size[0];
    const double center_y =
        spec.range_min[1] + (g.coord.y + 0.5) * spec.cell_size[1];
    for (std::size_t s = 0; s < n; ++s) {
      double* row = slots.data() + s * channels;
      row[raw + 0] = row[0] - mean[0];
      row[raw + 1] = row[1] - mean[1];
      row[raw + 2] = row[2] - mean[2];
      row[raw + 3] = row[0] - center_x;
      row[raw + 4] = row[1] - center_y;
    }
  }
  return batch;
}

FeatureMap scatter_to_grid(const CellFeatures& features,
                           std::span<const CellCoord> coords,
                           const GridSpec& spec) {
  spec.validate();
  require(features.size() == coords.size(),
          "scatter needs one coordinate per feature row");
  const auto d = spec.dims();
  const std::size_t channels = features.channels;
  FeatureMap map;
  if (spec.mode == GridMode::kPillar) {
    map.shape = {static_cast<std::size_t>(d[1]), static_cast<std::size_t>(d[0]),
                 channels};
  } else {
    map.shape = {static_cast<std::size_t>(d[2]), static_cast<std::size_t>(d[1]),
                 static_cast<std::size_t>(d[0]), channels};
  }
  const std::size_t cells = spec.cell_count();
  if (channels != 0 && cells > kMaxFeatureMapValues / channels) {
    fail(ErrorKind::kConfig,
         "dense feature map of " + std::to_string(cells) + " cells x " +
             std::to_string(channels) +
             " channels is too large; narrow the grid range");
  }
  map.data.assign(cells * channels, 0.0);
  std::vector<bool> written(cells, false);
  for (std::size_t k = 0; k < coords.size(); ++k) {
    require(spec.in_bounds(coords[k]),
            "scatter coordinate " + std::to_string(k) + " outside the grid");
    const std::size_t linear = spec.linear_index(coords[k]);
    require(!written[linear],
            "duplicate scatter coordinate at row " + std::to_string(k));
    written[linear] = true;
    const auto row = features.row(k);
    std::copy(row.begin(), row.end(), map.data.begin() + linear * channels);
  }
  return map;
}

CellFeatures gather_from_grid(const FeatureMap& map,
                              std::span<const CellCoord> coords,
                              const GridSpec& spec) {
  const std::size_t channels = map.channels();
  require(map.data.size() == spec.cell_count() * channels,
          "feature map shape does not match the grid");
  CellFeatures out(coords.size(), channels);
  for (std::size_t k = 0; k < coords.size(); ++k) {
    require(spec.in_bounds(coords[k]), "gather coordinate outside the grid");
    const auto first =
        map.data.begin() + spec.linear_index(coords[k]) * channels;
    std::copy(first, first + channels, out.row(k).begin());
  }
  return out;
}

void write_feature_map(const FeatureMap& map,
                       const std::filesystem::path& blob_path,
                       const std::filesystem::path& header_path) {
  std::vector<unsigned char> bytes(map.data.size() * 8);
  for (std::size_t i = 0; i < map.data.size(); ++i) {
    auto bits = std::bit_cast<std::uint64_t>(map.data[i]);
    for (int b = 0; b < 8; ++b) {
      bytes[i * 8 + b] = static_cast<unsigned char>(bits & 0xffu);
      bits >>= 8;
    }
  }
  std::ofstream blob(blob_path, std::ios::binary | std::ios::trunc);
  if (!blob) fail(ErrorKind::kIo, "cannot open " + blob_path.string());
  blob.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
  if (!blob) fail(ErrorKind::kIo, "write failed: " + blob_path.string());

  nlohmann::json header = {{"shape", map.shape},
                           {"dtype", "f64"},
                           {"order", "row-major"},
                           {"byte_order", "little"},
                           {"blob", blob_path.filename().string()}};
  std::ofstream out(header_path, std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot open " + header_path.string());
  out << header.dump(2) << '\n';
  if (!out) fail(ErrorKind::kIo, "write failed: " + header_path.string());
}

FeatureMap read_feature_map(const std::filesystem::path& blob_path,
                            const std::filesystem::path& header_path) {
  std::ifstream hin(header_path);
  if (!hin) fail(ErrorKind::kIo, "cannot open " + header_path.string());
  nlohmann::json header;
  try {
    hin >> header;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kIo, header_path.string() + ": " + e.what());
  }
  if (header.value("dtype", "") != "f64") {
    fail(ErrorKind::kIo, header_path.string() + ": expected dtype f64");
  }
  FeatureMap map;
  map.shape = header.at("shape").get<std::vector<std::size_t>>();
  std::size_t count = 1;
  for (auto s : map.shape) count *= s;

  std::ifstream in(blob_path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + blob_path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() != count * 8) {
    fail(ErrorKind::kIo, blob_path.string() + ": size does not match header");
  }
  map.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (int b = 7; b >= 0; --b) bits = (bits << 8) | bytes[i * 8 + b];
    map.data[i] = std::bit_cast<double>(bits);
  }
  return map;
}

}  // namespace pillarkit
