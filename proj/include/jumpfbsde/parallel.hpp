#pragma once

#include <cstddef>
#include <functional>

namespace jumpfbsde {

/// Paths per work unit. Fixed so that chunk boundaries, and therefore every
/// ordered reduction, are independent of the worker count.
inline constexpr std::size_t kChunkSize = 512;

/// Worker threads used by parallel loops (default 1).
void set_num_threads(std::size_t n);
std::size_t num_threads();

inline std::size_t chunk_count(std::size_t n_items) {
  return (n_items + kChunkSize - 1) / kChunkSize;
}

/// Calls fn(chunk_index, begin, end) once per chunk of [0, n_items).
/// Chunks are claimed dynamically by the workers; if any call throws, the
/// exception from the lowest chunk index is rethrown after all workers join.
void parallel_chunks(std::size_t n_items,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

}  // namespace jumpfbsde
