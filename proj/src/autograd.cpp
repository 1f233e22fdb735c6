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

#include "pillarkit/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "pillarkit/error.hpp"

namespace pillarkit {

namespace {

// dL/dy -> dL/dx for one layer over the valid rows listed in `order`;
// accumulates weight and bias gradients in that order. `grad_in` may be null
// when the input gradient is unused.
void layer_backward(const DenseLayer& layer, const double* x, const double* y,
                    double* grad_out, std::span<const std::uint32_t> order,
                    LayerGradients& acc, double* grad_in) {
  const std::size_t n_in = layer.inputs;
  const std::size_t n_out = layer.outputs;
  for (const std::size_t r : order) {
    double* gz = grad_out + r * n_out;
    if (layer.activation == Activation::kRelu) {
      const double* yr = y + r * n_out;
      for (std::size_t o = 0; o < n_out; ++o) {
        if (!(yr[o] > 0.0)) gz[o] = 0.0;
      }
    }
    const double* xr = x + r * n_in;
    for (std::size_t k = 0; k < n_in; ++k) {
      const double xv = xr[k];
      double* dw = acc.weight.data() + k * n_out;
      for (std::size_t o = 0; o < n_out; ++o) dw[o] += xv * gz[o];
    }
    for (std::size_t o = 0; o < n_out; ++o) acc.bias[o] += gz[o];
    if (grad_in) {
      double* gx = grad_in + r * n_in;
      for (std::size_t k = 0; k < n_in; ++k) {
        const double* wk = layer.weight.data() + k * n_out;
        double s = 0.0;
        for (std::size_t o = 0; o < n_out; ++o) s += gz[o] * wk[o];
        gx[k] = s;
      }
    }
  }
}

struct ScalarGroup {
  std::string name;
  std::span<double> values;
  std::span<const double> analytic;
  // Indices eligible for perturbation (all, unless restricted).
  std::vector<std::size_t> eligible;
};

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

}  // namespace

Gradients Gradients::zeros_like(const DescriptorParams& params) {
  Gradients g;
  for (const auto& l : params.mlp.layers) {
    g.layers.push_back({std::vector<double>(l.weight.size(), 0.0),
                        std::vector<double>(l.bias.size(), 0.0)});
  }
  g.weights.assign(params.weights.values.size(), 0.0);
  return g;
}

BackwardResult descriptor_backward(const DescriptorParams& params,
                                   const ForwardCache& cache,
                                   const CellFeatures& upstream,
                                   bool want_input_grad) {
  const auto& layers = params.mlp.layers;
  require(!cache.activations.empty(), "forward cache is empty");
  require(cache.activations.size() == layers.size() + 1,
          "forward cache does not match the MLP depth");
  const std::size_t cells = cache.valid_count.size();
  const std::size_t capacity = cache.capacity;
  const std::size_t channels = params.mlp.out_channels();
  const std::size_t in_channels = params.mlp.in_channels();
  require(upstream.channels == channels && upstream.size() == cells,
          "upstream gradient shape does not match the forward outputs");
  for (std::size_t l = 0; l <= layers.size(); ++l) {
    const std::size_t width = l == 0 ? in_channels : layers[l - 1].outputs;
    require(cache.activations[l].size() == cells * capacity * width,
            "forward cache activation shape mismatch");
  }
  if (cache.kind == DescriptorKind::kWeighted) {
    params.weights.validate(capacity, channels);
    require(cache.sorted.size() == cells * capacity * channels &&
                cache.source.size() == cells * channels * capacity,
            "forward cache is missing the sorted matrices");
  } else if (cache.kind == DescriptorKind::kMax) {
    require(cache.argmax.size() == cells * channels,
            "forward cache is missing the argmax slots");
  }

  BackwardResult result;
  result.grads = Gradients::zeros_like(params);
  if (want_input_grad) {
    result.input_grad.assign(cells * capacity * in_channels, 0.0);
  }

  std::size_t widest = in_channels;
  for (const auto& l : layers) widest = std::max(widest, l.outputs);
  std::vector<double> grad(capacity * widest);
  std::vector<double> grad_prev(capacity * widest);
  const auto& w = params.weights;
  std::vector<std::uint32_t> order;

  for (std::size_t k = 0; k < cells; ++k) {
    const std::size_t n = static_cast<std::size_t>(cache.valid_count[k]);
    canonical_row_order(cache.activations[0].data() + k * capacity * in_channels,
                        in_channels, n, order);
    const auto up = upstream.row(k);
    std::fill(grad.begin(), grad.begin() + capacity * channels, 0.0);

    switch (cache.kind) {
      case DescriptorKind::kWeighted: {
        const double* a = cache.sorted.data() + k * capacity * channels;
        const std::uint32_t* src = cache.source.data() + k * channels * capacity;
        for (std::size_t r = 0; r < capacity; ++r) {
          const double* ar = a + r * channels;
          if (w.mode == AggregationMode::kShared) {
            double& gw = result.grads.weights[r];
            for (std::size_t c = 0; c < channels; ++c) gw += up[c] * ar[c];
          } else {
            double* gw = result.grads.weights.data() + r * channels;
            for (std::size_t c = 0; c < channels; ++c) gw[c] += up[c] * ar[c];
          }
        }
        // Padded rows have no source point.
        for (std::size_t c = 0; c < channels; ++c) {
          for (std::size_t r = capacity - n; r < capacity; ++r) {
            const double wr = w.at(r, c);
            if (wr == 0.0) continue;
            grad[src[c * capacity + r] * channels + c] = wr * up[c];
          }
        }
        break;
      }
      case DescriptorKind::kMax: {
        const std::uint32_t* arg = cache.argmax.data() + k * channels;
        for (std::size_t c = 0; c < channels; ++c) {
          grad[arg[c] * channels + c] = up[c];
        }
        break;
      }
      case DescriptorKind::kMean: {
        const double inv = 1.0 / static_cast<double>(n);
        for (std::size_t r = 0; r < n; ++r) {
          for (std::size_t c = 0; c < channels; ++c) {
            grad[r * channels + c] = inv * up[c];
          }
        }
        break;
      }
    }

    for (std::size_t l = layers.size(); l-- > 0;) {
      const auto& layer = layers[l];
      const double* x =
          cache.activations[l].data() + k * capacity * layer.inputs;
      const double* y =
          cache.activations[l + 1].data() + k * capacity * layer.outputs;
      double* grad_in = nullptr;
      if (l > 0) {
        grad_in = grad_prev.data();
      } else if (want_input_grad) {
        grad_in = result.input_grad.data() + k * capacity * in_channels;
      }
      layer_backward(layer, x, y, grad.data(), order, result.grads.layers[l],
                     grad_in);
      if (l > 0) grad.swap(grad_prev);
    }
  }
  return result;
}

LossFunction linear_sum_loss() {
  LossFunction loss;
  loss.value = [](const CellFeatures& o) {
    double s = 0.0;
    for (double v : o.values) s += v;
    return s;
  };
  loss.gradient = [](const CellFeatures& o) {
    CellFeatures g = o;
    std::fill(g.values.begin(), g.values.end(), 1.0);
    return g;
  };
  return loss;
}

LossFunction squared_error_loss(CellFeatures target) {
  LossFunction loss;
  loss.value = [target](const CellFeatures& o) {
    require(o.values.size() == target.values.size(),
            "loss target shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < o.values.size(); ++i) {
      const double d = o.values[i] - target.values[i];
      s += 0.5 * d * d;
    }
    return s;
  };
  loss.gradient = [target](const CellFeatures& o) {
    require(o.values.size() == target.values.size(),
            "loss target shape mismatch");
    CellFeatures g = o;
    for (std::size_t i = 0; i < g.values.size(); ++i) {
      g.values[i] = o.values[i] - target.values[i];
    }
    return g;
  };
  return loss;
}

double FdReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& g : groups) m = std::max(m, g.max_rel_error);
  return m;
}

bool is_tie_free(const FdProblem& problem, double margin) {
  const auto& params = problem.params;
  const auto& batch = problem.batch;
  ForwardOptions opts;
  opts.keep_cache = true;
  const auto fwd = descriptor_forward(params, batch, problem.kind, opts);
  const auto& cache = *fwd.cache;
  const auto& layers = params.mlp.layers;
  const std::size_t capacity = batch.capacity;

  // Pre-activations of the final layer, kept to exempt clamped entries.
  std::vector<double> last_pre;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    const bool last = l + 1 == layers.size();
    if (layer.activation != Activation::kRelu) continue;
    if (last) last_pre.assign(batch.size() * capacity * layer.outputs, 0.0);
    for (std::size_t k = 0; k < batch.size(); ++k) {
      const std::size_t n = static_cast<std::size_t>(batch.valid_count[k]);
      const double* x = cache.activations[l].data() + k * capacity * layer.inputs;
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t o = 0; o < layer.outputs; ++o) {
          double z = layer.bias[o];
          for (std::size_t i = 0; i < layer.inputs; ++i) {
            z += x[r * layer.inputs + i] * layer.w(i, o);
          }
          if (std::abs(z) <= margin) return false;
          if (last) last_pre[(k * capacity + r) * layer.outputs + o] = z;
        }
      }
    }
  }

  if (problem.kind == DescriptorKind::kMean) return true;
  const std::size_t channels = params.mlp.out_channels();
  const auto& embedded = cache.activations.back();
  std::vector<double> column;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const std::size_t n = static_cast<std::size_t>(batch.valid_count[k]);
    for (std::size_t c = 0; c < channels; ++c) {
      column.clear();
      for (std::size_t r = 0; r < n; ++r) {
        const std::size_t i = (k * capacity + r) * channels + c;
        if (!last_pre.empty() && last_pre[i] < 0.0) continue;
        column.push_back(embedded[i]);
      }
      std::sort(column.begin(), column.end());
      for (std::size_t i = 1; i < column.size(); ++i) {
        if (column[i] - column[i - 1] <= margin) return false;
      }
    }
  }
  return true;
}

FdReport finite_difference_check(const FdProblem& problem,
                                 const FdOptions& options) {
  require(options.step > 0.0 && options.tolerance > 0.0,
          "finite-difference step and tolerance must be positive");
  if (!is_tie_free(problem, 10.0 * options.step)) {
    fail(ErrorKind::kInvalidArgument,
         "finite-difference point is not tie-free");
  }

  ForwardOptions cached;
  cached.keep_cache = true;
  const auto fwd =
      descriptor_forward(problem.params, problem.batch, problem.kind, cached);
  const auto upstream = problem.loss.gradient(fwd.features);
  auto analytic = descriptor_backward(problem.params, *fwd.cache, upstream,
                                      options.check_input);
  if (options.corrupt_analytic) {
    options.corrupt_analytic(analytic.grads, analytic.input_grad);
  }

  DescriptorParams params = problem.params;
  CellBatch batch = problem.batch;
  std::vector<ScalarGroup> groups;
  for (std::size_t l = 0; l < params.mlp.layers.size(); ++l) {
    auto& layer = params.mlp.layers[l];
    const auto& g = analytic.grads.layers[l];
    groups.push_back({"layer" + std::to_string(l) + ".weight", layer.weight,
                      g.weight, all_indices(layer.weight.size())});
    groups.push_back({"layer" + std::to_string(l) + ".bias", layer.bias, g.bias,
                      all_indices(layer.bias.size())});
  }
  if (problem.kind == DescriptorKind::kWeighted) {
    groups.push_back({"aggregation.w", params.weights.values,
                      analytic.grads.weights,
                      all_indices(params.weights.values.size())});
  }
  if (options.check_input) {
    ScalarGroup input{"input", batch.data, analytic.input_grad, {}};
    for (std::size_t k = 0; k < batch.size(); ++k) {
      const std::size_t n = static_cast<std::size_t>(batch.valid_count[k]);
      for (std::size_t i = 0; i < n * batch.channels; ++i) {
        input.eligible.push_back(k * batch.cell_stride() + i);
      }
    }
    groups.push_back(std::move(input));
  }

  const auto loss_at = [&] {
    return problem.loss.value(
        descriptor_forward(params, batch, problem.kind).features);
  };

  const std::size_t cap = std::max<std::size_t>(200, options.max_scalars_per_group);
  std::mt19937_64 rng(options.seed);
  FdReport report;
  report.tolerance = options.tolerance;
  for (auto& group : groups) {
    auto indices = group.eligible;
    if (indices.size() > cap) {
      std::vector<std::size_t> picked;
      std::sample(indices.begin(), indices.end(), std::back_inserter(picked),
                  cap, rng);
      indices = std::move(picked);
    }
    FdGroupReport g{group.name, indices.size(), 0.0, true};
    for (std::size_t i : indices) {
      const double theta = group.values[i];
      const double h = options.step * std::max(1.0, std::abs(theta));
      const double up = theta + h;
      const double down = theta - h;
      group.values[i] = up;
      const double f_up = loss_at();
      group.values[i] = down;
      const double f_down = loss_at();
      group.values[i] = theta;
      const double numeric = (f_up - f_down) / (up - down);
      const double exact = group.analytic[i];
      const double denom =
          std::max({std::abs(exact), std::abs(numeric), 1e-12});
      g.max_rel_error = std::max(g.max_rel_error, std::abs(exact - numeric) / denom);
    }
    g.pass = g.max_rel_error <= options.tolerance;
    report.pass = report.pass && g.pass;
    report.groups.push_back(std::move(g));
  }
  return report;
}

FdReport finite_difference_check(
    const std::function<FdProblem(std::uint64_t)>& sampler,
    const FdOptions& options) {
  for (int attempt = 0; attempt < options.max_attempts; ++attempt) {
    const FdProblem problem = sampler(static_cast<std::uint64_t>(attempt));
    if (!is_tie_free(problem, 10.0 * options.step)) continue;
    FdReport report = finite_difference_check(problem, options);
    report.attempts = attempt + 1;
    return report;
  }
  fail(ErrorKind::kInvalidArgument,
       "no tie-free sample after " + std::to_string(options.max_attempts) +
           " attempts");
}

}  // namespace pillarkit
