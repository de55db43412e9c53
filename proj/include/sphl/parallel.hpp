#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace sphl {

namespace detail {
inline std::atomic<unsigned>& thread_setting() {
  static std::atomic<unsigned> n{1};
  return n;
}
}  // namespace detail

/// Worker count used by every parallel map in the library (default 1).
inline unsigned num_threads() noexcept { return detail::thread_setting().load(); }
inline void set_num_threads(unsigned n) noexcept {
  detail::thread_setting().store(std::max(1u, n));
}

/// Calls fn(i) for i in [0, n). Work is split into contiguous chunks; fn must
/// only write state owned by index i, so results never depend on the thread
/// count.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const unsigned threads =
      static_cast<unsigned>(std::min<std::size_t>(num_threads(), n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  pool.reserve(threads);
  const std::size_t chunk = (n + threads - 1) / threads;
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      const std::size_t lo = w * chunk;
      const std::size_t hi = std::min(n, lo + chunk);
      try {
        for (std::size_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace sphl
