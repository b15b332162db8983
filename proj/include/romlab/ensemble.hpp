#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "romlab/errors.hpp"

// Fixed-size worker pool for independent ensemble tasks. Results are
// returned in task order, so output never depends on the worker count.

namespace romlab {

/// Worker count from ROMLAB_WORKERS, else the hardware concurrency.
inline unsigned default_workers() {
  if (const char *env = std::getenv("ROMLAB_WORKERS")) {
    char *end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0)
      return static_cast<unsigned>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? hw : 1;
}

/// Runs fn(task) for task in [0, count) on `workers` threads. `sink`, when
/// given, is called under a lock as each task completes (in completion
/// order) so callers can persist partial results. The first exception is
/// rethrown after all workers have stopped.
template <class R>
std::vector<R> run_indexed(std::size_t count, unsigned workers,
                           const std::function<R(std::size_t)> &fn,
                           const std::function<void(std::size_t, const R &)> &sink = {}) {
  std::vector<std::optional<R>> slots(count);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex mu;
  auto work = [&]() {
    while (!failed.load()) {
      const std::size_t t = next.fetch_add(1);
      if (t >= count)
        return;
      try {
        R r = fn(t);
        std::lock_guard<std::mutex> lock(mu);
        if (sink)
          sink(t, r);
        slots[t] = std::move(r);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!error)
          error = std::current_exception();
        failed = true;
      }
    }
  };
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(
                                                         std::max<std::size_t>(count, 1))));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back(work);
    for (auto &th : pool)
      th.join();
  }
  if (error)
    std::rethrow_exception(error);
  std::vector<R> out;
  out.reserve(count);
  for (auto &s : slots)
    out.push_back(std::move(*s));
  return out;
}

} // namespace romlab
