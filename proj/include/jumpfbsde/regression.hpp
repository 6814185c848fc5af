#pragma once

#include <cstddef>
#include <vector>

namespace jumpfbsde {

struct LeastSquaresFit {
  std::vector<double> coef;  ///< one per design column; dropped columns get 0
  std::size_t rank = 0;
  std::size_t active = 0;    ///< columns kept after dropping constant/duplicate ones
  bool full_rank = true;
  bool min_norm = false;     ///< solved by the minimum-norm fallback
  double rss = 0.0;
};

/// Least squares on a row-major n x p design. All-zero columns and constant
/// columns after the first constant one are dropped silently. Remaining
/// columns are scaled to unit norm and factorised by column-pivoted QR with
/// relative rank threshold rank_tol. A rank-deficient design returns
/// full_rank = false and no coefficients unless allow_min_norm is set, in
/// which case the minimum-norm solution (in the unit-scaled columns) is used.
LeastSquaresFit least_squares(const std::vector<double>& design, std::size_t n, std::size_t p,
                              const std::vector<double>& y, bool allow_min_norm,
                              double rank_tol = 1e-10);

}  // namespace jumpfbsde
