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

#include "pillarkit/descriptor.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <random>
#include <string>

#include "pillarkit/error.hpp"
#include "pillarkit/parallel.hpp"
#include "pillarkit/sorting_network.hpp"

namespace pillarkit {

namespace {

void apply_layer(const DenseLayer& layer, const double* in, std::size_t rows,
                 double* out) {
  const std::size_t n_in = layer.inputs;
  const std::size_t n_out = layer.outputs;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = in + r * n_in;
    double* y = out + r * n_out;
    std::copy(layer.bias.begin(), layer.bias.end(), y);
    for (std::size_t k = 0; k < n_in; ++k) {
      const double xv = x[k];
      const double* wk = layer.weight.data() + k * n_out;
      for (std::size_t o = 0; o < n_out; ++o) y[o] += xv * wk[o];
    }
    if (layer.activation == Activation::kRelu) {
      for (std::size_t o = 0; o < n_out; ++o) y[o] = y[o] > 0.0 ? y[o] : 0.0;
    } else {
      // Canonical +0 keeps max and sort results independent of slot order.
      for (std::size_t o = 0; o < n_out; ++o) y[o] = y[o] == 0.0 ? 0.0 : y[o];
    }
  }
}

std::size_t widest_layer(const MlpParams& params) {
  std::size_t width = params.in_channels();
  for (const auto& l : params.layers) width = std::max(width, l.outputs);
  return width;
}

const NetworkCache& networks_for(std::size_t capacity) {
  static std::mutex mutex;
  static std::map<std::size_t, std::unique_ptr<NetworkCache>> caches;
  std::lock_guard lock(mutex);
  auto& slot = caches[capacity];
  if (!slot) slot = std::make_unique<NetworkCache>(capacity);
  return *slot;
}

// Sorted values of one channel's valid entries, ascending. Ties follow
// `rank` when given, slot order otherwise.
void argsort_channel(const double* slots, std::size_t channels,
                     std::size_t channel, std::size_t valid,
                     std::vector<std::uint32_t>& order,
                     const std::uint32_t* rank = nullptr) {
  order.resize(valid);
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(),
            [&](std::uint32_t a, std::uint32_t b) {
              const double va = slots[a * channels + channel];
              const double vb = slots[b * channels + channel];
              if (va != vb) return va < vb;
              return rank ? rank[a] < rank[b] : a < b;
            });
}

// Weighted sum over the top `valid` rows of a sorted block whose row r
// corresponds to matrix row (capacity - valid + r).
void weighted_rows(const AggregationWeights& w, const double* sorted_valid,
                   std::size_t capacity, std::size_t valid,
                   std::size_t channels, double* out) {
  std::fill(out, out + channels, 0.0);
  const std::size_t offset = capacity - valid;
  for (std::size_t r = 0; r < valid; ++r) {
    const double* row = sorted_valid + r * channels;
    if (w.mode == AggregationMode::kShared) {
      const double wr = w.values[offset + r];
      for (std::size_t c = 0; c < channels; ++c) out[c] += wr * row[c];
    } else {
      const double* wr = w.values.data() + (offset + r) * channels;
      for (std::size_t c = 0; c < channels; ++c) out[c] += wr[c] * row[c];
    }
  }
}

void mean_rows(const double* sorted_valid, std::size_t valid,
               std::size_t channels, double* out) {
  std::fill(out, out + channels, 0.0);
  const double inv = 1.0 / static_cast<double>(valid);
  for (std::size_t r = 0; r < valid; ++r) {
    const double* row = sorted_valid + r * channels;
    for (std::size_t c = 0; c < channels; ++c) out[c] += inv * row[c];
  }
}

void max_rows(const double* slots, std::size_t valid, std::size_t channels,
              double* out) {
  std::copy(slots, slots + channels, out);
  for (std::size_t r = 1; r < valid; ++r) {
    const double* row = slots + r * channels;
    for (std::size_t c = 0; c < channels; ++c) out[c] = std::max(out[c], row[c]);
  }
}

void check_cell(const CellView& cell) {
  require(cell.valid >= 1, "cell has no valid points");
  require(cell.valid <= cell.slots, "valid count exceeds slot capacity");
  require(cell.data.size() == cell.slots * cell.channels,
          "cell buffer does not match its shape");
}

// Copies the valid rows and sorts every column with std::sort.
std::vector<double> sorted_valid_rows(const CellView& cell) {
  std::vector<double> block(cell.data.begin(),
                            cell.data.begin() + cell.valid * cell.channels);
  std::vector<double> column(cell.valid);
  for (std::size_t c = 0; c < cell.channels; ++c) {
    for (std::size_t r = 0; r < cell.valid; ++r) column[r] = cell.at(r, c);
    std::sort(column.begin(), column.end());
    for (std::size_t r = 0; r < cell.valid; ++r) {
      block[r * cell.channels + c] = column[r];
    }
  }
  return block;
}

}  // namespace

void canonical_row_order(const double* input, std::size_t channels,
                         std::size_t valid, std::vector<std::uint32_t>& order) {
  order.resize(valid);
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    const double* ra = input + a * channels;
    const double* rb = input + b * channels;
    for (std::size_t c = 0; c < channels; ++c) {
      if (ra[c] != rb[c]) return ra[c] < rb[c];
    }
    return a < b;
  });
}

std::size_t MlpParams::in_channels() const {
  return layers.empty() ? 0 : layers.front().inputs;
}

std::size_t MlpParams::out_channels() const {
  return layers.empty() ? 0 : layers.back().outputs;
}

void MlpParams::validate() const {
  require(!layers.empty(), "MLP needs at least one layer");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    const std::string where = "MLP layer " + std::to_string(l);
    require(layer.inputs >= 1 && layer.outputs >= 1, where + " is empty");
    require(layer.weight.size() == layer.inputs * layer.outputs,
            where + " weight shape mismatch");
    require(layer.bias.size() == layer.outputs, where + " bias shape mismatch");
    if (l > 0) {
      require(layers[l - 1].outputs == layer.inputs,
              where + " does not chain with the previous layer");
    }
    for (double v : layer.weight) require(std::isfinite(v), where + " non-finite weight");
    for (double v : layer.bias) require(std::isfinite(v), where + " non-finite bias");
  }
}

MlpParams MlpParams::identity(std::size_t channels) {
  DenseLayer layer;
  layer.inputs = layer.outputs = channels;
  layer.weight.assign(channels * channels, 0.0);
  for (std::size_t i = 0; i < channels; ++i) layer.weight[i * channels + i] = 1.0;
  layer.bias.assign(channels, 0.0);
  layer.activation = Activation::kIdentity;
  return MlpParams{{std::move(layer)}};
}

MlpParams MlpParams::random(std::size_t in_channels,
                            std::span<const std::size_t> widths,
                            std::span<const Activation> activations,
                            std::uint64_t seed, double bias_scale) {
  require(!widths.empty() && widths.size() == activations.size(),
          "MLP needs one activation per layer");
  std::mt19937_64 rng(seed);
  MlpParams params;
  std::size_t inputs = in_channels;
  for (std::size_t l = 0; l < widths.size(); ++l) {
    DenseLayer layer;
    layer.inputs = inputs;
    layer.outputs = widths[l];
    layer.activation = activations[l];
    const double limit = std::sqrt(6.0 / static_cast<double>(inputs));
    std::uniform_real_distribution<double> wdist(-limit, limit);
    layer.weight.resize(inputs * widths[l]);
    for (auto& v : layer.weight) v = wdist(rng);
    layer.bias.assign(widths[l], 0.0);
    if (bias_scale > 0.0) {
      std::uniform_real_distribution<double> bdist(-bias_scale, bias_scale);
      for (auto& v : layer.bias) v = bdist(rng);
    }
    params.layers.push_back(std::move(layer));
    inputs = widths[l];
  }
  return params;
}

void AggregationWeights::validate(std::size_t capacity,
                                  std::size_t feature_channels) const {
  require(rows == capacity, "aggregation weights have " +
                                std::to_string(rows) + " rows, cells hold " +
                                std::to_string(capacity) + " slots");
  if (mode == AggregationMode::kShared) {
    require(values.size() == rows, "shared weights must have one value per row");
  } else {
    require(channels == feature_channels,
            "per-channel weights do not match the feature width");
    require(values.size() == rows * channels,
            "per-channel weights must be rows x channels");
  }
  for (double v : values) require(std::isfinite(v), "non-finite aggregation weight");
}

AggregationWeights AggregationWeights::unit_last(std::size_t rows,
                                                 AggregationMode mode,
                                                 std::size_t channels) {
  require(rows >= 1, "aggregation weights need at least one row");
  AggregationWeights w;
  w.mode = mode;
  w.rows = rows;
  if (mode == AggregationMode::kShared) {
    w.values.assign(rows, 0.0);
    w.values.back() = 1.0;
  } else {
    w.channels = channels;
    w.values.assign(rows * channels, 0.0);
    std::fill(w.values.end() - static_cast<std::ptrdiff_t>(channels),
              w.values.end(), 1.0);
  }
  return w;
}

void DescriptorParams::validate(std::size_t capacity) const {
  mlp.validate();
  weights.validate(capacity, mlp.out_channels());
}

std::vector<double> mlp_forward(const MlpParams& params, const CellView& cell) {
  params.validate();
  check_cell(cell);
  require(cell.channels == params.in_channels(),
          "cell has " + std::to_string(cell.channels) +
              " channels, MLP expects " + std::to_string(params.in_channels()));
  std::vector<double> current(cell.data.begin(),
                              cell.data.begin() + cell.valid * cell.channels);
  std::vector<double> next;
  for (const auto& layer : params.layers) {
    next.assign(cell.valid * layer.outputs, 0.0);
    apply_layer(layer, current.data(), cell.valid, next.data());
    current.swap(next);
  }
  current.resize(cell.slots * params.out_channels(), 0.0);
  return current;
}

SortedFeatureMatrix sort_project(const CellView& embedded) {
  check_cell(embedded);
  SortedFeatureMatrix out;
  out.rows = embedded.slots;
  out.channels = embedded.channels;
  out.valid = embedded.valid;
  out.values.assign(out.rows * out.channels, 0.0);
  out.source.resize(out.channels * out.rows);
  const std::size_t offset = out.rows - out.valid;
  std::vector<std::uint32_t> order;
  for (std::size_t c = 0; c < out.channels; ++c) {
    argsort_channel(embedded.data.data(), embedded.channels, c, embedded.valid,
                    order);
    std::uint32_t* src = out.source.data() + c * out.rows;
    for (std::size_t r = 0; r < offset; ++r) {
      src[r] = static_cast<std::uint32_t>(out.valid + r);
    }
    for (std::size_t r = 0; r < out.valid; ++r) {
      src[offset + r] = order[r];
      out.values[(offset + r) * out.channels + c] = embedded.at(order[r], c);
    }
  }
  return out;
}

std::vector<double> aggregate_weighted(const AggregationWeights& weights,
                                       const SortedFeatureMatrix& sorted) {
  weights.validate(sorted.rows, sorted.channels);
  std::vector<double> out(sorted.channels);
  const std::size_t offset = sorted.rows - sorted.valid;
  // Padded rows are zero and contribute nothing.
  weighted_rows(weights, sorted.values.data() + offset * sorted.channels,
                sorted.rows, sorted.valid, sorted.channels, out.data());
  return out;
}

std::vector<double> aggregate_max(const CellView& embedded) {
  check_cell(embedded);
  std::vector<double> out(embedded.channels);
  max_rows(embedded.data.data(), embedded.valid, embedded.channels, out.data());
  return out;
}

std::vector<double> aggregate_mean(const CellView& embedded) {
  check_cell(embedded);
  const auto block = sorted_valid_rows(embedded);
  std::vector<double> out(embedded.channels);
  mean_rows(block.data(), embedded.valid, embedded.channels, out.data());
  return out;
}

ForwardResult descriptor_forward(const DescriptorParams& params,
                                 const CellBatch& batch, DescriptorKind kind,
                                 const ForwardOptions& options) {
  params.validate(batch.capacity);
  require(batch.channels == params.mlp.in_channels(),
          "cell batch has " + std::to_string(batch.channels) +
              " channels, descriptor expects " +
              std::to_string(params.mlp.in_channels()));
  require(batch.data.size() == batch.size() * batch.cell_stride(),
          "cell batch data size does not match its shape");
  for (int n : batch.valid_count) {
    require(n >= 1 && static_cast<std::size_t>(n) <= batch.capacity,
            "cell batch has a valid count outside [1, capacity]");
  }

  const std::size_t cells = batch.size();
  const std::size_t capacity = batch.capacity;
  const std::size_t channels = params.mlp.out_channels();
  const std::size_t layers = params.mlp.layers.size();

  ForwardResult result;
  result.features = CellFeatures(cells, channels);
  ForwardCache* cache = nullptr;
  if (options.keep_cache) {
    result.cache.emplace();
    cache = &*result.cache;
    cache->kind = kind;
    cache->capacity = capacity;
    cache->valid_count = batch.valid_count;
    cache->activations.reserve(layers + 1);
    cache->activations.push_back(batch.data);
    for (const auto& l : params.mlp.layers) {
      cache->activations.emplace_back(cells * capacity * l.outputs, 0.0);
    }
    if (kind == DescriptorKind::kWeighted) {
      cache->sorted.assign(cells * capacity * channels, 0.0);
      cache->source.assign(cells * channels * capacity, 0);
    } else if (kind == DescriptorKind::kMax) {
      cache->argmax.assign(cells * channels, 0);
    }
  }

  const NetworkCache& networks = networks_for(capacity);
  const std::size_t width = widest_layer(params.mlp);
  const unsigned workers = std::max(1u, options.threads);

  parallel_for(cells, workers, [&](std::size_t begin, std::size_t end,
                                   unsigned) {
    std::vector<double> ping(capacity * width, 0.0);
    std::vector<double> pong(capacity * width, 0.0);
    std::vector<std::uint32_t> order;
    std::vector<std::uint32_t> canonical;
    std::vector<std::uint32_t> rank(capacity);
    for (std::size_t k = begin; k < end; ++k) {
      const std::size_t n = static_cast<std::size_t>(batch.valid_count[k]);
      double* out = result.features.values.data() + k * channels;

      const double* input = batch.data.data() + k * batch.cell_stride();
      double* embedded = nullptr;
      for (std::size_t l = 0; l < layers; ++l) {
        const auto& layer = params.mlp.layers[l];
        double* target =
            cache ? cache->activations[l + 1].data() + k * capacity * layer.outputs
                  : (l % 2 == 0 ? ping.data() : pong.data());
        apply_layer(layer, input, n, target);
        input = target;
        embedded = target;
      }

      if (!cache) {
        switch (kind) {
          case DescriptorKind::kWeighted:
            sort_columns(networks.get(n), embedded, channels);
            weighted_rows(params.weights, embedded, capacity, n, channels, out);
            break;
          case DescriptorKind::kMean:
            sort_columns(networks.get(n), embedded, channels);
            mean_rows(embedded, n, channels, out);
            break;
          case DescriptorKind::kMax:
            max_rows(embedded, n, channels, out);
            break;
        }
        continue;
      }

      canonical_row_order(batch.data.data() + k * batch.cell_stride(),
                          batch.channels, n, canonical);
      for (std::size_t i = 0; i < n; ++i) rank[canonical[i]] = static_cast<std::uint32_t>(i);

      switch (kind) {
        case DescriptorKind::kWeighted: {
          double* sorted = cache->sorted.data() + k * capacity * channels;
          std::uint32_t* source =
              cache->source.data() + k * channels * capacity;
          const std::size_t offset = capacity - n;
          for (std::size_t c = 0; c < channels; ++c) {
            argsort_channel(embedded, channels, c, n, order, rank.data());
            std::uint32_t* src = source + c * capacity;
            for (std::size_t r = 0; r < offset; ++r) {
              src[r] = static_cast<std::uint32_t>(n + r);
            }
            for (std::size_t r = 0; r < n; ++r) {
              src[offset + r] = order[r];
              sorted[(offset + r) * channels + c] =
                  embedded[order[r] * channels + c];
            }
          }
          weighted_rows(params.weights, sorted + offset * channels, capacity,
                        n, channels, out);
          break;
        }
        case DescriptorKind::kMean: {
          std::copy(embedded, embedded + n * channels, ping.data());
          sort_columns(networks.get(n), ping.data(), channels);
          mean_rows(ping.data(), n, channels, out);
          break;
        }
        case DescriptorKind::kMax: {
          std::uint32_t* arg = cache->argmax.data() + k * channels;
          for (std::size_t c = 0; c < channels; ++c) {
            double best = embedded[c];
            std::uint32_t best_slot = 0;
            for (std::size_t r = 1; r < n; ++r) {
              const double v = embedded[r * channels + c];
              if (v > best || (v == best && rank[r] > rank[best_slot])) {
                best = v;
                best_slot = static_cast<std::uint32_t>(r);
              }
            }
            out[c] = best;
            arg[c] = best_slot;
          }
          break;
        }
      }
    }
  });
  return result;
}

CellFeatures aggregate_cells(const AggregationWeights& weights,
                             const CellBatch& embedded, DescriptorKind kind,
                             unsigned threads) {
  const std::size_t capacity = embedded.capacity;
  const std::size_t channels = embedded.channels;
  if (kind == DescriptorKind::kWeighted) weights.validate(capacity, channels);
  require(embedded.data.size() == embedded.size() * embedded.cell_stride(),
          "cell batch data size does not match its shape");
  for (int n : embedded.valid_count) {
    require(n >= 1 && static_cast<std::size_t>(n) <= capacity,
            "cell batch has a valid count outside [1, capacity]");
  }
  CellFeatures features(embedded.size(), channels);
  const NetworkCache& networks = networks_for(capacity);
  parallel_for(embedded.size(), std::max(1u, threads),
               [&](std::size_t begin, std::size_t end, unsigned) {
    std::vector<double> scratch(capacity * channels);
    for (std::size_t k = begin; k < end; ++k) {
      const std::size_t n = static_cast<std::size_t>(embedded.valid_count[k]);
      const double* cell = embedded.data.data() + k * embedded.cell_stride();
      double* out = features.values.data() + k * channels;
      if (kind == DescriptorKind::kMax) {
        max_rows(cell, n, channels, out);
        continue;
      }
      std::copy(cell, cell + n * channels, scratch.data());
      sort_columns(networks.get(n), scratch.data(), channels);
      if (kind == DescriptorKind::kWeighted) {
        weighted_rows(weights, scratch.data(), capacity, n, channels, out);
      } else {
        mean_rows(scratch.data(), n, channels, out);
      }
    }
  });
  return features;
}

}  // namespace pillarkit
