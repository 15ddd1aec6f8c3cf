// Copyright 2026 The sedlab Authors
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

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "sedlab/tensor.hpp"

namespace sedlab {

// Worker count for embarrassingly parallel loops. CI_SED_THREADS caps
// it when set; otherwise hardware concurrency is used.
inline int worker_count() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* env = std::getenv("CI_SED_THREADS")) {
    try {
      const int cap = std::stoi(std::string(env));
      if (cap >= 1 && cap < n) n = cap;
      if (cap >= 1 && n < 1) n = cap;
    } catch (const std::exception&) {
      // Unparseable values leave the default in place.
    }
  }
  return n;
}

// Runs fn(i) for i in [0, count) across up to `workers` threads. Each
// index must be independent of the others; outputs may not depend on
// scheduling order. The first exception thrown by any worker is
// rethrown on the calling thread after all workers join.
template <typename Fn>
void parallel_for(Index count, int workers, Fn&& fn) {
  if (count <= 0) return;
  if (workers > count) workers = static_cast<int>(count);
  if (workers <= 1) {
    for (Index i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<Index> next(0);
  std::exception_ptr error;
  std::mutex error_mu;
  auto body = [&]() {
    for (;;) {
      const Index i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) threads.emplace_back(body);
  for (auto& th : threads) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace sedlab
