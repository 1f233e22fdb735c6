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

// Small classification and regression tasks on synthetic cells, with a
// linear head trained on top of the descriptor.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "pillarkit/descriptor.hpp"
#include "pillarkit/optimizer.hpp"

namespace pillarkit {

enum class ToyTask {
  // Two classes whose cells share per-channel min and max exactly; only the
  // interior order statistics carry the label.
  kEqualExtremes,
  // Predict a quantile of channel 0 within each cell.
  kQuantileRegression,
};

struct ToyTaskSpec {
  ToyTask task = ToyTask::kEqualExtremes;
  // Equal-extremes: number of (class 0, class 1) pairs. Regression: number
  // of cells.
  std::size_t cells_per_class = 500;
  std::size_t capacity = 32;
  // Equal-extremes cells always carry x, y, z, reflectance.
  std::size_t raw_channels = 4;
  std::uint64_t seed = 0;
  // Fraction of pairs (or cells) used for training.
  double split = 0.5;
  double quantile = 0.5;

  void validate() const;
  std::size_t classes() const { return task == ToyTask::kEqualExtremes ? 2 : 0; }
};

struct ToyDataset {
  ToyTaskSpec spec;
  CellBatch train;
  CellBatch val;
  // Class index per cell, or the regression target stored as a double.
  std::vector<double> train_targets;
  std::vector<double> val_targets;
};

/// Deterministic in `spec`. Equal-extremes pairs share a random extent box;
/// both cells of a pair land on the same side of the split.
ToyDataset build_toy_dataset(const ToyTaskSpec& spec);

/// Class 1 when the normalized median of the cell's columns sits far from
/// the middle of the [min, max] range, averaged over channels.
int quantile_threshold_classify(const CellView& cell);
/// Accuracy of quantile_threshold_classify over train and validation cells.
double quantile_oracle_accuracy(const ToyDataset& data);

enum class WeightInit { kUnitLast, kUniform };

struct TrainConfig {
  DescriptorKind kind = DescriptorKind::kWeighted;
  // Hidden and output widths of the embedding. Empty means an identity
  // embedding, which is never trained.
  std::vector<std::size_t> mlp_widths;
  Activation final_activation = Activation::kRelu;
  bool train_mlp = true;
  bool train_weights = true;
  WeightInit weight_init = WeightInit::kUnitLast;
  AggregationMode weight_mode = AggregationMode::kShared;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double learning_rate = 0.01;
  std::size_t steps = 2000;
  std::size_t batch_size = 32;
  std::size_t eval_every = 100;
  std::uint64_t seed = 0;
  // Stop early after this many steps in total (0 runs to `steps`). Used to
  // produce checkpoints for resuming.
  std::size_t stop_after = 0;

  void validate() const;
};

struct LinearHead {
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  std::vector<double> weight;  // inputs x outputs, row-major
  std::vector<double> bias;

  friend bool operator==(const LinearHead&, const LinearHead&) = default;
};

/// Everything needed to continue training bitwise-identically.
struct TrainState {
  DescriptorParams descriptor;
  LinearHead head;
  OptimizerState optimizer;
  std::uint64_t step = 0;

  friend bool operator==(const TrainState&, const TrainState&) = default;
};

struct EvalRecord {
  std::uint64_t step = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  // Accuracy for classification, mean squared error for regression.
  double val_metric = 0.0;

  friend bool operator==(const EvalRecord&, const EvalRecord&) = default;
};

struct Metrics {
  DescriptorKind kind = DescriptorKind::kWeighted;
  ToyTask task = ToyTask::kEqualExtremes;
  // Minibatch loss of every step run in this call.
  std::vector<double> step_losses;
  std::vector<EvalRecord> evals;
  double final_metric = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  Metrics metrics;
  TrainState state;
};

/// Fresh parameters for `config` on `data`, seeded by config.seed.
TrainState init_train_state(const ToyDataset& data, const TrainConfig& config);

/// Trains the descriptor and head with minibatches drawn from (seed, step),
/// so a run resumed from a checkpoint reproduces an uninterrupted one.
/// Evaluates at step 0, every eval_every steps and at `steps`. Throws
/// Error(kDivergence) naming the step on a non-finite loss or gradient.
TrainResult train_descriptor(const ToyDataset& data, const TrainConfig& config,
                             std::optional<TrainState> resume = std::nullopt);

}  // namespace pillarkit
