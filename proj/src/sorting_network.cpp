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

#include "pillarkit/sorting_network.hpp"

namespace pillarkit {

std::vector<Comparator> odd_even_merge_network(std::size_t n) {
  std::vector<Comparator> net;
  std::size_t padded = 1;
  while (padded < n) padded <<= 1;
  for (std::size_t p = 1; p < padded; p <<= 1) {
    for (std::size_t k = p; k >= 1; k >>= 1) {
      for (std::size_t j = k % p; j + k < padded; j += 2 * k) {
        for (std::size_t i = 0; i < std::min(k, padded - j - k); ++i) {
          const std::size_t lo = i + j;
          const std::size_t hi = i + j + k;
          if (lo / (2 * p) != hi / (2 * p)) continue;
          if (hi >= n) continue;
          net.push_back({static_cast<std::uint32_t>(lo),
                         static_cast<std::uint32_t>(hi)});
        }
      }
    }
  }
  return net;
}

NetworkCache::NetworkCache(std::size_t max_inputs)
    : networks_(max_inputs + 1) {
  for (std::size_t n = 0; n <= max_inputs; ++n) {
    networks_[n] = odd_even_merge_network(n);
  }
}

}  // namespace pillarkit
