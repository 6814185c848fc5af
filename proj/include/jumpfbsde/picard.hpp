#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "jumpfbsde/bsde.hpp"
#include "jumpfbsde/liability.hpp"
#include "jumpfbsde/market.hpp"
#include "jumpfbsde/optimality.hpp"
#include "jumpfbsde/utility.hpp"

namespace jumpfbsde {

/// alpha_i = E[U'(X_T + H) | F_i] and the integrands of its increments,
///   alpha_{i+1} - alpha_i ~ beta_i dW_i + gamma_i dn_i.
struct AdjointProcess {
  std::size_t n_paths = 0;
  std::size_t M = 0;
  std::vector<double> alpha;  ///< n_paths x (M + 1)
  std::vector<double> beta;   ///< n_paths x M
  std::vector<double> gamma;  ///< n_paths x M

  double a(std::size_t p, std::size_t i) const { return alpha[p * (M + 1) + i]; }
  double b(std::size_t p, std::size_t i) const { return beta[p * M + i]; }
  double g(std::size_t p, std::size_t i) const { return gamma[p * M + i]; }
};

struct PicardOptions {
  std::size_t n_paths = 50000;
  std::uint64_t seed = 1;
  std::size_t n_iter = 10;
  int regression_degree = 3;
  double damping = 1.0;      ///< rho in pi <- (1 - rho) pi + rho * update
  double x0 = 0.0;
  double root_tol = kDefaultRootTol;
  double policy_tol = 1e-4;  ///< stop once sup |pi^{k+1} - pi^k| falls below this
};

struct PicardIteration {
  std::size_t iteration = 0;
  /// sup and RMS over (path, step) of |alpha mu + beta sigma + gamma eta nu| / alpha
  double residual_sup = 0.0;
  double residual_rms = 0.0;
  /// sup |pi^{k+1} - pi^k|; 0 on the final evaluation pass
  double policy_change_sup = 0.0;
  /// rough standard error of the normalised residual from regression scatter
  double noise = 0.0;
  std::size_t rank_warnings = 0;
  std::size_t clamps = 0;
  std::size_t root_failures = 0;
  bool evaluation_only = false;
};

struct PicardResult {
  WealthPath wealth;        ///< final forward pass; wealth.pi is the strategy table
  BsdeSolution solution;    ///< states are path indices
  AdjointProcess adjoint;
  std::vector<PicardIteration> history;  ///< updates, then one evaluation pass
  bool converged = false;       ///< policy change fell below policy_tol
  bool non_convergence = false; ///< residual rose over 3 consecutive iterations
  std::vector<std::string> warnings;

  const PicardIteration& first() const { return history.front(); }
  const PicardIteration& last() const { return history.back(); }
};

/// Picard iteration for the coupled forward-backward system on one fixed
/// path bundle: simulate X under pi^k (pi^0 = 0), regress alpha backward on
/// a state basis {1, U'(X)/U'(mean X), standardised X^1..X^d} (plus
/// N-indicators when H uses N_T and W terms when H uses W_T) crossed with
/// {1, dn, dW}, recover (Y, Z, Psi) and update pi by solve_G (diffusive) or
/// pure_jump_strategy (pure jump). The updated pi is projected back onto the
/// state basis, which gives the feedback policy for the next iteration.
PicardResult picard_solve_coupled(const MarketCoefficients& coeffs, const UtilityFunction& U,
                                  const Liability& H, const TimeGrid& grid,
                                  const PicardOptions& options);

}  // namespace jumpfbsde
