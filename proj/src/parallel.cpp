#include "jumpfbsde/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace jumpfbsde {

namespace {
std::atomic<std::size_t> g_threads{1};
}

void set_num_threads(std::size_t n) { g_threads = n == 0 ? 1 : n; }

std::size_t num_threads() { return g_threads; }

void parallel_chunks(std::size_t n_items,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  const std::size_t n_chunks = chunk_count(n_items);
  if (n_chunks == 0) return;

  const std::size_t workers = std::min<std::size_t>(g_threads, n_chunks);
  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  std::size_t first_error_chunk = n_chunks;

  auto work = [&] {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= n_chunks) return;
      const std::size_t begin = c * kChunkSize;
      const std::size_t end = std::min(n_items, begin + kChunkSize);
      try {
        fn(c, begin, end);
      } catch (...) {
        std::lock_guard lock(err_mutex);
        if (c < first_error_chunk) {
          first_error_chunk = c;
          first_error = std::current_exception();
        }
      }
    }
  };

  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
  }
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace jumpfbsde
