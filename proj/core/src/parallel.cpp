#include "transnet/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace transnet {

namespace {

int threads_from_env() noexcept {
  const char* env = std::getenv("TRANSNET_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (end == env || v <= 0) return 1;
  return static_cast<int>(v > 256 ? 256 : v);
}

std::atomic<int>& thread_setting() noexcept {
  static std::atomic<int> setting{threads_from_env()};
  return setting;
}

}  // namespace

int thread_count() noexcept { return thread_setting().load(std::memory_order_relaxed); }

void set_thread_count(int threads) noexcept {
  thread_setting().store(threads < 1 ? 1 : threads, std::memory_order_relaxed);
}

}  // namespace transnet
