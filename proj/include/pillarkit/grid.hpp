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
#include <span>
#include <string>
#include <vector>

#include "pillarkit/pointcloud.hpp"

namespace pillarkit {

enum class GridMode { kPillar, kVoxel };
enum class OverflowPolicy { kKeepFirst, kSeededSubsample };

/// Integer cell indices. Pillars always have z == 0.
struct CellCoord {
  int x = 0;
  int y = 0;
  int z = 0;

  friend bool operator==(const CellCoord&, const CellCoord&) = default;
};

struct GridSpec {
  GridMode mode = GridMode::kPillar;
  std::array<double, 3> range_min{0.0, -39.68, -3.0};
  std::array<double, 3> range_max{69.12, 39.68, 1.0};
  // In pillar mode the z entry is ignored: the whole z range is one cell.
  std::array<double, 3> cell_size{0.16, 0.16, 4.0};
  int capacity = 32;
  int max_cells = 16000;
  OverflowPolicy overflow = OverflowPolicy::kKeepFirst;
  std::uint64_t subsample_seed = 0;
  bool decorate = true;

  /// KITTI pillar setup: 0.16 x 0.16 x 4 m cells, 32 points per pillar.
  static GridSpec pillar_default();
  /// KITTI voxel setup: 0.05 x 0.05 x 0.1 m cells, 5 points per voxel.
  static GridSpec voxel_default();

  void validate() const;

  /// Cells per axis (x, y, z); z is 1 in pillar mode.
  std::array<int, 3> dims() const;
  std::size_t cell_count() const;
  std::size_t linear_index(const CellCoord& c) const;
  bool in_bounds(const CellCoord& c) const;

  /// Channels per slot once decoration is applied to `raw_channels` inputs.
  std::size_t decorated_channels(std::size_t raw_channels) const {
    return raw_channels + (decorate ? 5 : 0);
  }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

struct CellAssignment {
  std::size_t point_index = 0;
  CellCoord cell;
};

/// Bins every in-range point with floor((v - range_min) / cell_size) on each
/// gridded axis. Points outside [range_min, range_max) on any spatial axis,
/// or landing past the last whole cell, are left out. Output keeps cloud
/// order.
std::vector<CellAssignment> assign_cells(const PointCloud& cloud,
                                         const GridSpec& spec);

/// K occupied cells, each a fixed buffer of `capacity` slots with
/// `channels` values per slot. Slots at or past valid_count are zero.
struct CellBatch {
  std::size_t capacity = 0;
  std::size_t channels = 0;
  std::vector<double> data;
  std::vector<int> valid_count;
  std::vector<CellCoord> coords;
  GridSpec spec;

  CellBatch() = default;
  CellBatch(std::size_t cells, std::size_t capacity, std::size_t channels,
            GridSpec spec = {});

  std::size_t size() const { return valid_count.size(); }
  bool empty() const { return valid_count.empty(); }
  std::size_t cell_stride() const { return capacity * channels; }

  std::span<const double> cell(std::size_t k) const {
    return {data.data() + k * cell_stride(), cell_stride()};
  }
  std::span<double> cell(std::size_t k) {
    return {data.data() + k * cell_stride(), cell_stride()};
  }

  /// Throws unless counts, zero padding and coordinates are consistent.
  void validate() const;

  friend bool operator==(const CellBatch&, const CellBatch&) = default;
};

/// Groups in-range points into occupied cells in row-major (z, y, x) order.
/// Keeps at most `max_cells` cells, preferring higher point counts with
/// row-major order breaking ties, and at most `capacity` points per cell
/// per the overflow policy. With decoration on, five channels are appended
/// per point: offsets from the mean of the cell's kept points (x_c, y_c,
/// z_c) and from the cell's geometric center (x_p, y_p).
CellBatch build_cell_batch(const PointCloud& cloud, const GridSpec& spec);

/// K x C per-cell feature vectors, row-major.
struct CellFeatures {
  std::size_t channels = 0;
  std::vector<double> values;

  CellFeatures() = default;
  CellFeatures(std::size_t cells, std::size_t channels)
      : channels(channels), values(cells * channels, 0.0) {}

  std::size_t size() const { return channels == 0 ? 0 : values.size() / channels; }
  std::span<const double> row(std::size_t k) const {
    return {values.data() + k * channels, channels};
  }
  std::span<double> row(std::size_t k) {
    return {values.data() + k * channels, channels};
  }

  friend bool operator==(const CellFeatures&, const CellFeatures&) = default;
};

/// Dense grid of feature vectors: shape (ny, nx, C) for pillars and
/// (nz, ny, nx, C) for voxels, row-major.
struct FeatureMap {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  std::size_t channels() const { return shape.empty() ? 0 : shape.back(); }
  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;
};

/// Dense maps above this many values are rejected rather than allocated.
inline constexpr std::size_t kMaxFeatureMapValues = std::size_t{1} << 30;

FeatureMap scatter_to_grid(const CellFeatures& features,
                           std::span<const CellCoord> coords,
                           const GridSpec& spec);

CellFeatures gather_from_grid(const FeatureMap& map,
                              std::span<const CellCoord> coords,
                              const GridSpec& spec);

/// Writes the map as little-endian float64 values plus a JSON sidecar
/// holding shape, dtype and order.
void write_feature_map(const FeatureMap& map,
                       const std::filesystem::path& blob_path,
                       const std::filesystem::path& header_path);
FeatureMap read_feature_map(const std::filesystem::path& blob_path,
                            const std::filesystem::path& header_path);

}  // namespace pillarkit
