#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

#include "hddembed/errors.hpp"

namespace hddembed {

/// Default worker count: HDDEMBED_THREADS when set, else all cores.
inline unsigned default_thread_count() {
  if (const char* env = std::getenv("HDDEMBED_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, n). Each index writes only its own output, so
/// results do not depend on the number of threads. The failure with the
/// smallest index is rethrown, wrapped with that index.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  if (n == 0) return;
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const DomainError& e) {
      throw DomainError("item " + std::to_string(i) + ": " + e.what());
    } catch (const QuadratureError& e) {
      throw QuadratureError("item " + std::to_string(i) + ": " + e.what(), e.residual());
    } catch (const SolverError& e) {
      throw SolverError("item " + std::to_string(i) + ": " + e.what());
    } catch (const std::exception& e) {
      throw std::runtime_error("item " + std::to_string(i) + ": " + e.what());
    }
  }
}

}  // namespace hddembed
