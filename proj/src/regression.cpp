#include "jumpfbsde/regression.hpp"

#include <cmath>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "jumpfbsde/errors.hpp"

namespace jumpfbsde {

LeastSquaresFit least_squares(const std::vector<double>& design, std::size_t n, std::size_t p,
                              const std::vector<double>& y, bool allow_min_norm, double rank_tol) {
  if (design.size() != n * p || y.size() != n) {
    throw ConfigError(fmt::format("least_squares: design {} / target {} do not match {} x {}",
                                  design.size(), y.size(), n, p));
  }
  LeastSquaresFit fit;
  fit.coef.assign(p, 0.0);

  std::vector<std::size_t> keep;
  bool have_constant = false;
  for (std::size_t j = 0; j < p; ++j) {
    double lo = design[j], hi = design[j];
    for (std::size_t r = 1; r < n; ++r) {
      const double v = design[r * p + j];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (!std::isfinite(lo) || !std::isfinite(hi)) {
      throw NumericalRangeError(fmt::format("least_squares: non-finite entry in design column {}", j));
    }
    if (lo == hi) {
      if (lo == 0.0 || have_constant) continue;
      have_constant = true;
    }
    keep.push_back(j);
  }
  fit.active = keep.size();
  if (keep.empty()) {
    for (double v : y) fit.rss += v * v;
    return fit;
  }

  const auto q = static_cast<Eigen::Index>(keep.size());
  Eigen::MatrixXd A(static_cast<Eigen::Index>(n), q);
  for (std::size_t r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < q; ++c) A(static_cast<Eigen::Index>(r), c) = design[r * p + keep[c]];
  }
  Eigen::VectorXd scale = A.colwise().norm().transpose();
  for (Eigen::Index c = 0; c < q; ++c) A.col(c) /= scale(c);
  const Eigen::Map<const Eigen::VectorXd> b(y.data(), static_cast<Eigen::Index>(n));

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A.rows(), A.cols());
  qr.setThreshold(rank_tol);
  qr.compute(A);
  fit.rank = static_cast<std::size_t>(qr.rank());
  fit.full_rank = fit.rank == keep.size();

  Eigen::VectorXd sol;
  if (fit.full_rank) {
    sol = qr.solve(b);
  } else if (allow_min_norm) {
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(A.rows(), A.cols());
    cod.setThreshold(rank_tol);
    cod.compute(A);
    sol = cod.solve(b);
    fit.min_norm = true;
  } else {
    return fit;
  }
  fit.rss = (A * sol - b).squaredNorm();
  for (Eigen::Index c = 0; c < q; ++c) fit.coef[keep[c]] = sol(c) / scale(c);
  return fit;
}

}  // namespace jumpfbsde
