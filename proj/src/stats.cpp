#include "jumpfbsde/stats.hpp"

#include "jumpfbsde/parallel.hpp"

namespace jumpfbsde {

std::vector<RunningStats> chunked_stats(
    std::size_t n, std::size_t k,
    const std::function<void(std::size_t, std::vector<RunningStats>&)>& fn) {
  std::vector<std::vector<RunningStats>> parts(chunk_count(n), std::vector<RunningStats>(k));
  parallel_chunks(n, [&](std::size_t c, std::size_t begin, std::size_t end) {
    auto& acc = parts[c];
    for (std::size_t i = begin; i < end; ++i) fn(i, acc);
  });
  std::vector<RunningStats> out(k);
  for (const auto& part : parts) {
    for (std::size_t j = 0; j < k; ++j) out[j].merge(part[j]);
  }
  return out;
}

double ordered_sum(std::size_t n, const std::function<double(std::size_t)>& fn) {
  std::vector<double> parts(chunk_count(n), 0.0);
  parallel_chunks(n, [&](std::size_t c, std::size_t begin, std::size_t end) {
    double s = 0.0;
    for (std::size_t i = begin; i < end; ++i) s += fn(i);
    parts[c] = s;
  });
  double total = 0.0;
  for (double v : parts) total += v;
  return total;
}

}  // namespace jumpfbsde
