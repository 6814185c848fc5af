#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

namespace jumpfbsde {

/// Streaming mean/variance; merge() uses the pairwise update so that
/// chunk-ordered merging is reproducible.
struct RunningStats {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }

  void merge(const RunningStats& o) {
    if (o.n == 0) return;
    if (n == 0) {
      *this = o;
      return;
    }
    const double na = static_cast<double>(n);
    const double nb = static_cast<double>(o.n);
    const double d = o.mean - mean;
    const double nt = na + nb;
    mean += d * nb / nt;
    m2 += o.m2 + d * d * na * nb / nt;
    n += o.n;
  }

  double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
  double std_error() const { return n > 0 ? std::sqrt(variance() / static_cast<double>(n)) : 0.0; }
};

/// Runs fn(item, stats) over [0, n) in parallel chunks, with k accumulators per
/// chunk, and merges the chunks in index order.
std::vector<RunningStats> chunked_stats(
    std::size_t n, std::size_t k,
    const std::function<void(std::size_t, std::vector<RunningStats>&)>& fn);

/// Sum of fn(i) over [0, n): per-chunk sums added in chunk order.
double ordered_sum(std::size_t n, const std::function<double(std::size_t)>& fn);

}  // namespace jumpfbsde
