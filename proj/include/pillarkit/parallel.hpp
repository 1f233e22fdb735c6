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
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace pillarkit {

/// Worker count from PILLARKIT_THREADS, falling back to the hardware count.
inline unsigned default_thread_count() {
  if (const char* env = std::getenv("PILLARKIT_THREADS")) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (end != env && v >= 1) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Splits [0, count) into contiguous chunks and calls fn(begin, end, worker)
/// once per chunk. Chunk boundaries depend only on count and threads, so
/// callers writing to pre-assigned slots get schedule-independent results.
template <class Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
  const std::size_t workers =
      std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(count, 1));
  if (workers == 1) {
    fn(std::size_t{0}, count, 0u);
    return;
  }
  const std::size_t chunk = (count + workers - 1) / workers;
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) {
    const std::size_t begin = std::min(count, w * chunk);
    const std::size_t end = std::min(count, begin + chunk);
    pool.emplace_back([&fn, begin, end, w] {
      fn(begin, end, static_cast<unsigned>(w));
    });
  }
  fn(std::size_t{0}, std::min(count, chunk), 0u);
}

}  // namespace pillarkit
