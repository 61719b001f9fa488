#include "weakbsde/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <thread>
#include <vector>

namespace weakbsde {

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("WEAKBSDE_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end && *end == '\0' && v > 0) return int(v);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? int(hw) : 1;
}

void for_blocks(idx_t n, int threads,
                const std::function<void(idx_t, idx_t, idx_t)>& body,
                idx_t block) {
  if (n <= 0) return;
  if (block <= 0) throw std::invalid_argument("for_blocks: block size");
  const idx_t blocks = n_blocks(n, block);
  const int workers = std::min<idx_t>(std::max(1, threads), blocks);
  if (workers == 1) {
    for (idx_t b = 0; b < blocks; ++b)
      body(b, b * block, std::min(n, (b + 1) * block));
    return;
  }
  std::atomic<idx_t> next{0};
  std::exception_ptr first_error;
  std::atomic<bool> failed{false};
  auto worker = [&] {
    for (;;) {
      idx_t b = next.fetch_add(1, std::memory_order_relaxed);
      if (b >= blocks || failed.load(std::memory_order_relaxed)) return;
      try {
        body(b, b * block, std::min(n, (b + 1) * block));
      } catch (...) {
        if (!failed.exchange(true)) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (int t = 1; t < workers; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (failed.load()) std::rethrow_exception(first_error);
}

}  // namespace weakbsde
