#pragma once

#include <cstddef>

namespace transnet {

/// Worker-thread cap. Initialized from TRANSNET_THREADS on first use;
/// 0, 1 or unset means single-threaded.
int thread_count() noexcept;
void set_thread_count(int threads) noexcept;

/// Runs fn(i) for i in [0, n). Every index must write disjoint outputs and
/// perform its own reductions in a fixed order, so results do not depend on
/// the thread count.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const int threads = thread_count();
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const auto count = static_cast<long long>(n);
#pragma omp parallel for num_threads(threads) schedule(static)
  for (long long i = 0; i < count; ++i) fn(static_cast<std::size_t>(i));
}

}  // namespace transnet
