/// @file parallel.hpp
/// @brief Ordered parallel map over independent cells.
#ifndef CMHD_PARALLEL_HPP
#define CMHD_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace cmhd {

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Results keep index order,
/// so reports do not depend on scheduling. The first exception is rethrown.
template <class R>
std::vector<R> parallel_map(std::size_t n, int threads, const std::function<R(std::size_t)>& fn) {
  std::vector<R> out(n);
  const std::size_t nw = std::max<std::size_t>(1, std::min<std::size_t>(n, std::max(1, threads)));
  if (nw == 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errs(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < nw; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          out[i] = fn(i);
        } catch (...) {
          errs[i] = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace cmhd

#endif  // CMHD_PARALLEL_HPP
