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

#include "pillarkit/toy.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <span>
#include <string>

#include "pillarkit/autograd.hpp"
#include "pillarkit/error.hpp"
#include "pillarkit/pointcloud.hpp"
#include "pillarkit/properties.hpp"
#include "pillarkit/seed.hpp"

namespace pillarkit {

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Indices [0, count) split into a sorted training part and a sorted rest.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t count, double fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(mix_seed(seed, 0x5b1d));
  std::shuffle(order.begin(), order.end(), rng);
  auto train_count = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(count)));
  train_count = std::clamp<std::size_t>(train_count, 1, count - 1);
  std::vector<std::size_t> train(order.begin(), order.begin() + train_count);
  std::vector<std::size_t> val(order.begin() + train_count, order.end());
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  return {train, val};
}

void set_cell(CellBatch& batch, std::size_t k, std::span<const double> values,
              std::size_t valid) {
  batch.valid_count[k] = static_cast<int>(valid);
  std::copy(values.begin(), values.end(), batch.cell(k).begin());
}

ToyDataset equal_extremes_dataset(const ToyTaskSpec& spec) {
  const std::size_t pairs = spec.cells_per_class;
  const std::size_t stride = spec.capacity * spec.raw_channels;
  std::vector<double> cells(2 * pairs * stride);
  for (std::size_t p = 0; p < pairs; ++p) {
    std::mt19937_64 rng(mix_seed(spec.seed, p));
    SyntheticCloudSpec cloud;
    cloud.kind = GeneratorKind::kEqualExtremesPair;
    for (std::size_t a = 0; a < 3; ++a) {
      cloud.extent.min[a] = uniform(rng, -1.0, 1.0);
      cloud.extent.max[a] = cloud.extent.min[a] + uniform(rng, 0.5, 2.0);
    }
    cloud.count = spec.capacity;
    cloud.seed = rng();
    for (int label = 0; label < 2; ++label) {
      cloud.label = label;
      const PointCloud pc = generate_synthetic(cloud);
      std::copy(pc.values().begin(), pc.values().end(),
                cells.begin() + (2 * p + label) * stride);
    }
  }

  const auto [train_pairs, val_pairs] = split_indices(pairs, spec.split, spec.seed);
  ToyDataset data;
  data.spec = spec;
  auto fill = [&](const std::vector<std::size_t>& chosen, CellBatch& batch,
                  std::vector<double>& targets) {
    batch = line_cell_batch(2 * chosen.size(), spec.capacity, spec.raw_channels);
    for (std::size_t i = 0; i < chosen.size(); ++i) {
      for (std::size_t label = 0; label < 2; ++label) {
        const std::size_t src = 2 * chosen[i] + label;
        set_cell(batch, 2 * i + label,
                 std::span<const double>(cells.data() + src * stride, stride),
                 spec.capacity);
        targets.push_back(static_cast<double>(label));
      }
    }
  };
  fill(train_pairs, data.train, data.train_targets);
  fill(val_pairs, data.val, data.val_targets);
  return data;
}

ToyDataset quantile_dataset(const ToyTaskSpec& spec) {
  const std::size_t count = spec.cells_per_class;
  const std::size_t n = spec.capacity;
  const std::size_t channels = spec.raw_channels;
  const auto rank = static_cast<std::size_t>(
      std::llround(spec.quantile * static_cast<double>(n - 1)));
  std::vector<double> cells(count * n * channels);
  std::vector<double> targets(count);
  std::vector<double> column(n);
  for (std::size_t k = 0; k < count; ++k) {
    std::mt19937_64 rng(mix_seed(spec.seed, k));
    double* cell = cells.data() + k * n * channels;
    for (std::size_t c = 0; c < channels; ++c) {
      const double lo = uniform(rng, -1.0, 0.0);
      const double span = uniform(rng, 0.5, 2.0);
      // Skewed per cell so the quantile is not a fixed fraction of the range.
      const double power = std::exp(uniform(rng, -1.2, 1.2));
      for (std::size_t s = 0; s < n; ++s) {
        cell[s * channels + c] = lo + span * std::pow(uniform(rng, 0.0, 1.0), power);
      }
    }
    for (std::size_t s = 0; s < n; ++s) column[s] = cell[s * channels];
    std::nth_element(column.begin(), column.begin() + rank, column.end());
    targets[k] = column[rank];
  }

  const auto [train_idx, val_idx] = split_indices(count, spec.split, spec.seed);
  ToyDataset data;
  data.spec = spec;
  auto fill = [&](const std::vector<std::size_t>& chosen, CellBatch& batch,
                  std::vector<double>& out) {
    batch = line_cell_batch(chosen.size(), n, channels);
    for (std::size_t i = 0; i < chosen.size(); ++i) {
      set_cell(batch, i,
               std::span<const double>(cells.data() + chosen[i] * n * channels,
                                       n * channels),
               n);
      out.push_back(targets[chosen[i]]);
    }
  };
  fill(train_idx, data.train, data.train_targets);
  fill(val_idx, data.val, data.val_targets);
  return data;
}

struct HeadOutput {
  double loss = 0.0;
  double metric = 0.0;
  CellFeatures grad_features;
  LinearHead grad_head;
};

// Loss, metric and gradients of the head on descriptor outputs. Cross
// entropy for classification, half squared error for regression; both
// averaged over cells.
HeadOutput apply_head(const LinearHead& head, const CellFeatures& features,
                      std::span<const double> targets, ToyTask task,
                      bool want_grads) {
  const std::size_t cells = features.size();
  const std::size_t in = head.inputs;
  const std::size_t out = head.outputs;
  const double inv = 1.0 / static_cast<double>(cells);
  HeadOutput result;
  std::vector<double> dlogits(cells * out);
  std::vector<double> logits(out);
  double correct = 0.0;
  double squared = 0.0;
  for (std::size_t k = 0; k < cells; ++k) {
    const auto row = features.row(k);
    for (std::size_t o = 0; o < out; ++o) {
      double acc = head.bias[o];
      for (std::size_t i = 0; i < in; ++i) acc += row[i] * head.weight[i * out + o];
      logits[o] = acc;
    }
    double* d = dlogits.data() + k * out;
    if (task == ToyTask::kEqualExtremes) {
      const auto label = static_cast<std::size_t>(targets[k]);
      const double top = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (std::size_t o = 0; o < out; ++o) z += std::exp(logits[o] - top);
      result.loss += inv * (top + std::log(z) - logits[label]);
      const auto best = static_cast<std::size_t>(
          std::max_element(logits.begin(), logits.end()) - logits.begin());
      if (best == label) correct += 1.0;
      for (std::size_t o = 0; o < out; ++o) {
        const double p = std::exp(logits[o] - top) / z;
        d[o] = inv * (p - (o == label ? 1.0 : 0.0));
      }
    } else {
      const double err = logits[0] - targets[k];
      result.loss += inv * 0.5 * err * err;
      squared += err * err;
      d[0] = inv * err;
    }
  }
  result.metric = task == ToyTask::kEqualExtremes ? correct * inv : squared * inv;
  if (!want_grads) return result;

  result.grad_head = LinearHead{in, out, std::vector<double>(in * out, 0.0),
                                std::vector<double>(out, 0.0)};
  result.grad_features = CellFeatures(cells, in);
  for (std::size_t k = 0; k < cells; ++k) {
    const auto row = features.row(k);
    const double* d = dlogits.data() + k * out;
    double* gf = result.grad_features.values.data() + k * in;
    for (std::size_t o = 0; o < out; ++o) result.grad_head.bias[o] += d[o];
    for (std::size_t i = 0; i < in; ++i) {
      double acc = 0.0;
      for (std::size_t o = 0; o < out; ++o) {
        result.grad_head.weight[i * out + o] += row[i] * d[o];
        acc += head.weight[i * out + o] * d[o];
      }
      gf[i] = acc;
    }
  }
  return result;
}

bool trains_mlp(const TrainConfig& config) {
  return config.train_mlp && !config.mlp_widths.empty();
}

bool trains_weights(const TrainConfig& config) {
  return config.train_weights && config.kind == DescriptorKind::kWeighted;
}

std::vector<std::span<double>> trainable(TrainState& state, const TrainConfig& config) {
  std::vector<std::span<double>> out{state.head.weight, state.head.bias};
  if (trains_mlp(config)) {
    for (auto& l : state.descriptor.mlp.layers) {
      out.emplace_back(l.weight);
      out.emplace_back(l.bias);
    }
  }
  if (trains_weights(config)) out.emplace_back(state.descriptor.weights.values);
  return out;
}

std::vector<std::span<const double>> trainable_grads(const HeadOutput& head,
                                                     const Gradients& grads,
                                                     const TrainConfig& config) {
  std::vector<std::span<const double>> out{head.grad_head.weight,
                                           head.grad_head.bias};
  if (trains_mlp(config)) {
    for (const auto& l : grads.layers) {
      out.emplace_back(l.weight);
      out.emplace_back(l.bias);
    }
  }
  if (trains_weights(config)) out.emplace_back(grads.weights);
  return out;
}

EvalRecord evaluate(const ToyDataset& data, const TrainState& state,
                    const TrainConfig& config) {
  const ToyTask task = data.spec.task;
  const auto train = apply_head(
      state.head, descriptor_forward(state.descriptor, data.train, config.kind).features,
      data.train_targets, task, false);
  const auto val = apply_head(
      state.head, descriptor_forward(state.descriptor, data.val, config.kind).features,
      data.val_targets, task, false);
  return {state.step, train.loss, val.loss, val.metric};
}

}  // namespace

void ToyTaskSpec::validate() const {
  require(cells_per_class >= 2, "toy task needs at least two pairs or cells");
  require(capacity >= 2, "toy task capacity must be at least 2");
  require(raw_channels >= 1, "toy task needs at least one channel");
  require(split > 0.0 && split < 1.0, "train/val split must lie in (0, 1)");
  require(quantile >= 0.0 && quantile <= 1.0, "quantile must lie in [0, 1]");
  if (task == ToyTask::kEqualExtremes) {
    require(raw_channels == 4,
            "equal-extremes cells carry exactly 4 channels (x, y, z, reflectance)");
  }
}

ToyDataset build_toy_dataset(const ToyTaskSpec& spec) {
  spec.validate();
  return spec.task == ToyTask::kEqualExtremes ? equal_extremes_dataset(spec)
                                              : quantile_dataset(spec);
}

int quantile_threshold_classify(const CellView& cell) {
  require(cell.valid >= 1, "cell has no valid points");
  std::vector<double> column(cell.valid);
  double score = 0.0;
  for (std::size_t c = 0; c < cell.channels; ++c) {
    for (std::size_t s = 0; s < cell.valid; ++s) column[s] = cell.at(s, c);
    std::sort(column.begin(), column.end());
    const double range = column.back() - column.front();
    const double m =
        range > 0.0 ? (column[cell.valid / 2] - column.front()) / range : 0.5;
    score += std::abs(m - 0.5);
  }
  return score / static_cast<double>(cell.channels) > 0.3 ? 1 : 0;
}

double quantile_oracle_accuracy(const ToyDataset& data) {
  require(data.spec.task == ToyTask::kEqualExtremes,
          "the quantile oracle applies to the classification task");
  std::size_t correct = 0;
  std::size_t total = 0;
  for (const auto* part : {&data.train, &data.val}) {
    const auto& targets = part == &data.train ? data.train_targets : data.val_targets;
    for (std::size_t k = 0; k < part->size(); ++k) {
      if (quantile_threshold_classify(cell_view(*part, k)) ==
          static_cast<int>(targets[k])) {
        ++correct;
      }
      ++total;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

void TrainConfig::validate() const {
  require(steps >= 1, "steps must be at least 1");
  require(batch_size >= 1, "batch size must be at least 1");
  require(eval_every >= 1, "eval cadence must be at least 1");
  require(learning_rate > 0.0 && std::isfinite(learning_rate),
          "learning rate must be positive");
  for (std::size_t w : mlp_widths) require(w >= 1, "MLP widths must be positive");
}

TrainState init_train_state(const ToyDataset& data, const TrainConfig& config) {
  config.validate();
  const std::size_t raw = data.spec.raw_channels;
  const std::size_t capacity = data.spec.capacity;
  TrainState state;
  if (config.mlp_widths.empty()) {
    state.descriptor.mlp = MlpParams::identity(raw);
  } else {
    std::vector<Activation> acts(config.mlp_widths.size(), Activation::kRelu);
    acts.back() = config.final_activation;
    state.descriptor.mlp = MlpParams::random(raw, config.mlp_widths, acts,
                                             mix_seed(config.seed, 1));
  }
  const std::size_t channels = state.descriptor.mlp.out_channels();
  state.descriptor.weights = AggregationWeights::unit_last(
      capacity, config.weight_mode,
      config.weight_mode == AggregationMode::kPerChannel ? channels : 0);
  if (config.weight_init == WeightInit::kUniform) {
    std::fill(state.descriptor.weights.values.begin(),
              state.descriptor.weights.values.end(),
              1.0 / static_cast<double>(capacity));
  }

  const std::size_t outputs = data.spec.task == ToyTask::kEqualExtremes ? 2 : 1;
  state.head = LinearHead{channels, outputs, std::vector<double>(channels * outputs),
                          std::vector<double>(outputs, 0.0)};
  std::mt19937_64 rng(mix_seed(config.seed, 2));
  const double bound = 1.0 / std::sqrt(static_cast<double>(channels));
  for (auto& v : state.head.weight) v = uniform(rng, -bound, bound);

  state.optimizer.algorithm = config.optimizer;
  state.optimizer.learning_rate = config.learning_rate;
  return state;
}

TrainResult train_descriptor(const ToyDataset& data, const TrainConfig& config,
                             std::optional<TrainState> resume) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  TrainResult result;
  result.state = resume ? std::move(*resume) : init_train_state(data, config);
  TrainState& state = result.state;
  state.descriptor.validate(data.spec.capacity);
  require(state.step <= config.steps, "checkpoint is past the configured steps");

  Metrics& metrics = result.metrics;
  metrics.kind = config.kind;
  metrics.task = data.spec.task;
  if (state.step == 0) metrics.evals.push_back(evaluate(data, state, config));

  const std::size_t train_cells = data.train.size();
  const std::size_t batch = std::min(config.batch_size, train_cells);
  const std::size_t last =
      config.stop_after > 0 ? std::min(config.stop_after, config.steps) : config.steps;
  std::vector<std::size_t> all(train_cells);
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<std::size_t> chosen;
  CellBatch mini = line_cell_batch(batch, data.spec.capacity, data.spec.raw_channels);
  std::vector<double> targets(batch);
  ForwardOptions opts;
  opts.keep_cache = true;

  while (state.step < last) {
    chosen.clear();
    std::mt19937_64 rng(mix_seed(config.seed, state.step));
    std::sample(all.begin(), all.end(), std::back_inserter(chosen), batch, rng);
    for (std::size_t i = 0; i < batch; ++i) {
      set_cell(mini, i, data.train.cell(chosen[i]),
               static_cast<std::size_t>(data.train.valid_count[chosen[i]]));
      targets[i] = data.train_targets[chosen[i]];
    }

    const auto fwd = descriptor_forward(state.descriptor, mini, config.kind, opts);
    const auto head = apply_head(state.head, fwd.features, targets, data.spec.task, true);
    if (!std::isfinite(head.loss)) {
      fail(ErrorKind::kDivergence,
           "non-finite loss at step " + std::to_string(state.step));
    }
    metrics.step_losses.push_back(head.loss);
    const auto back = descriptor_backward(state.descriptor, *fwd.cache,
                                          head.grad_features);
    try {
      optimizer_step(state.optimizer, trainable(state, config),
                     trainable_grads(head, back.grads, config));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kDivergence) throw;
      fail(ErrorKind::kDivergence,
           "step " + std::to_string(state.step) + ": " + e.what());
    }
    ++state.step;
    if (state.step % config.eval_every == 0 || state.step == config.steps) {
      metrics.evals.push_back(evaluate(data, state, config));
    }
  }
  if (!metrics.evals.empty()) metrics.final_metric = metrics.evals.back().val_metric;
  metrics.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace pillarkit
