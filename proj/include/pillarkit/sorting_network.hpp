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

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace pillarkit {

struct Comparator {
  std::uint32_t lo;
  std::uint32_t hi;
};

/// Batcher odd-even merge sort network for `n` inputs. Built for the next
/// power of two with comparators touching the missing tail dropped, which is
/// equivalent to padding with +inf.
std::vector<Comparator> odd_even_merge_network(std::size_t n);

/// Returns the cached network for `n` inputs, n <= max_inputs() of the
/// cache it came from.
class NetworkCache {
 public:
  explicit NetworkCache(std::size_t max_inputs);

  const std::vector<Comparator>& get(std::size_t n) const {
    return networks_[n];
  }
  std::size_t max_inputs() const { return networks_.size() - 1; }

 private:
  std::vector<std::vector<Comparator>> networks_;
};

/// Sorts each column of a rows x channels row-major block ascending, all
/// columns at once. Only the values move; no permutation is tracked.
inline void sort_columns(std::span<const Comparator> network, double* rows,
                         std::size_t channels) {
  for (const auto& cmp : network) {
    double* a = rows + cmp.lo * channels;
    double* b = rows + cmp.hi * channels;
    for (std::size_t c = 0; c < channels; ++c) {
      const double x = a[c];
      const double y = b[c];
      a[c] = std::min(x, y);
      b[c] = std::max(x, y);
    }
  }
}

}  // namespace pillarkit
