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

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "pillarkit/grid.hpp"

namespace pillarkit {

enum class Activation { kRelu, kIdentity };

/// y = act(x W + b), W stored inputs x outputs row-major.
struct DenseLayer {
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  std::vector<double> weight;
  std::vector<double> bias;
  Activation activation = Activation::kRelu;

  double w(std::size_t in, std::size_t out) const {
    return weight[in * outputs + out];
  }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// The shared per-point embedding h.
struct MlpParams {
  std::vector<DenseLayer> layers;

  std::size_t in_channels() const;
  std::size_t out_channels() const;
  /// Throws unless layer shapes chain and every value is finite.
  void validate() const;

  /// One identity-activated layer with W = I and b = 0.
  static MlpParams identity(std::size_t channels);
  /// He-uniform weights; biases uniform in [-bias_scale, bias_scale].
  static MlpParams random(std::size_t in_channels,
                          std::span<const std::size_t> widths,
                          std::span<const Activation> activations,
                          std::uint64_t seed, double bias_scale = 0.0);

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

enum class AggregationMode { kShared, kPerChannel };

/// The weights combining sorted rows: a length-N vector in shared mode, an
/// N x C matrix in per-channel mode. Unconstrained.
struct AggregationWeights {
  AggregationMode mode = AggregationMode::kShared;
  std::size_t rows = 0;
  std::size_t channels = 0;  // 0 in shared mode
  std::vector<double> values;

  double at(std::size_t row, std::size_t channel) const {
    return mode == AggregationMode::kShared ? values[row]
                                            : values[row * channels + channel];
  }

  void validate(std::size_t capacity, std::size_t feature_channels) const;

  /// All weight on the last row: the max-pool special case.
  static AggregationWeights unit_last(
      std::size_t rows, AggregationMode mode = AggregationMode::kShared,
      std::size_t channels = 0);

  friend bool operator==(const AggregationWeights&,
                         const AggregationWeights&) = default;
};

struct DescriptorParams {
  MlpParams mlp;
  AggregationWeights weights;

  void validate(std::size_t capacity) const;
  friend bool operator==(const DescriptorParams&,
                         const DescriptorParams&) = default;
};

enum class DescriptorKind { kWeighted, kMax, kMean };

/// Read-only view of one cell's slot buffer.
struct CellView {
  std::span<const double> data;
  std::size_t slots = 0;
  std::size_t channels = 0;
  std::size_t valid = 0;

  double at(std::size_t slot, std::size_t channel) const {
    return data[slot * channels + channel];
  }
};

inline CellView cell_view(const CellBatch& batch, std::size_t k) {
  return {batch.cell(k), batch.capacity, batch.channels,
          static_cast<std::size_t>(batch.valid_count[k])};
}

/// Applies h to the valid slots; invalid slots stay exactly zero.
std::vector<double> mlp_forward(const MlpParams& params, const CellView& cell);

/// Per-channel ascending sort of the valid values, placed in the top `valid`
/// rows; lower rows are zero padding. Ties keep slot order.
struct SortedFeatureMatrix {
  std::size_t rows = 0;
  std::size_t channels = 0;
  std::size_t valid = 0;
  std::vector<double> values;         // rows x channels
  std::vector<std::uint32_t> source;  // channels x rows: slot feeding (r, c)

  double at(std::size_t row, std::size_t channel) const {
    return values[row * channels + channel];
  }
  std::uint32_t source_slot(std::size_t row, std::size_t channel) const {
    return source[channel * rows + row];
  }
};

SortedFeatureMatrix sort_project(const CellView& embedded);

/// O[c] = sum_i w[i] A[i][c] (or W[i][c] in per-channel mode).
std::vector<double> aggregate_weighted(const AggregationWeights& weights,
                                       const SortedFeatureMatrix& sorted);
/// Per-channel max over valid slots.
std::vector<double> aggregate_max(const CellView& embedded);
/// Per-channel mean over valid slots, accumulated as (1/n) * v in ascending
/// value order so the result does not depend on slot order.
std::vector<double> aggregate_mean(const CellView& embedded);

/// Valid slots ordered lexicographically by their input rows, ties by slot.
/// Training-mode sorts break ties in this order rather than by slot, so the
/// backward pass does not depend on how points were laid out.
void canonical_row_order(const double* input, std::size_t channels,
                         std::size_t valid, std::vector<std::uint32_t>& order);

/// Intermediates retained by descriptor_forward for the backward pass.
struct ForwardCache {
  DescriptorKind kind = DescriptorKind::kWeighted;
  std::size_t capacity = 0;
  std::vector<int> valid_count;
  // activations[0] is the batch input; activations[l + 1] the output of
  // layer l. Each is K x capacity x width.
  std::vector<std::vector<double>> activations;
  // kWeighted: sorted matrices, K x capacity x C, and their source slots,
  // K x C x capacity.
  std::vector<double> sorted;
  std::vector<std::uint32_t> source;
  // kMax: winning slot per cell and channel, K x C. Ties go to the point
  // ranked last by canonical_row_order, matching the sort's top row.
  std::vector<std::uint32_t> argmax;
};

struct ForwardOptions {
  bool keep_cache = false;
  unsigned threads = 1;
};

struct ForwardResult {
  CellFeatures features;
  std::optional<ForwardCache> cache;
};

/// Embeds every cell with h and aggregates with `kind`. Results are
/// identical for any thread count.
ForwardResult descriptor_forward(const DescriptorParams& params,
                                 const CellBatch& batch, DescriptorKind kind,
                                 const ForwardOptions& options = {});

/// The aggregation stage alone, applied to cells that are already embedded.
/// Matches descriptor_forward with an identity embedding.
CellFeatures aggregate_cells(const AggregationWeights& weights,
                             const CellBatch& embedded, DescriptorKind kind,
                             unsigned threads = 1);

}  // namespace pillarkit
