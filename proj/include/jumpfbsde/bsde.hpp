#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "jumpfbsde/market.hpp"
#include "jumpfbsde/utility.hpp"

namespace jumpfbsde {

// Sign convention: every driver is stored in generator form g, with
//   dY = -g dt + Z dW + Psi dn,   Y_T = H,
// so the dt-integrand written in the backward equation for exponential
// utility is -g.

/// [q]_delta = (nu/delta)(exp(delta q) - 1 - delta q).
double bracket_delta(double q, double nu, double delta);

/// Exponential-utility pure-jump generator
///   f(z, psi) = sup_pi { pi mu - [-psi - pi eta]_delta } - delta z^2 / 2
///             = (nu/delta)(1-m) ln(1-m) - (mu/eta)(psi - 1/delta) - delta z^2 / 2.
double exponential_driver(double z, double psi, double mu, double eta, double nu, double delta);

/// The dt-integrand of the backward equation as written,
///   delta z^2/2 - (nu/delta)(1-m) ln(1-m) + (mu/eta)(psi - 1/delta),
/// which equals -exponential_driver.
double exponential_bsde_integrand(double z, double psi, double mu, double eta, double nu, double delta);

/// a = (m + (1-m) ln(1-m)) nu, m = mu/(eta nu). Always >= 0 for m < 1.
double canonical_a(double mu, double eta, double nu);

/// int_{t_i}^T f(s) ds for every grid point, composite Simpson on each cell
/// (endpoints plus midpoint).
std::vector<double> tail_integrals(const TimeGrid& grid, const std::function<double(double)>& f);

struct DeterministicY {
  TimeGrid grid;
  std::vector<double> Y;  ///< Y(t_i), i = 0..M
  double y0() const { return Y.front(); }
};

/// Z = Psi = 0 reduction for exponential utility in a deterministic pure-jump
/// market with constant liability: Y(t) = H + (1/delta) int_t^T a_s ds.
DeterministicY deterministic_Y(const MarketCoefficients& coeffs, double delta, double H_const,
                               const TimeGrid& grid);

/// Y, Z, Psi on a grid. For lattice solutions a "state" is the jump count
/// n = 0..n_states-1; for Monte Carlo solutions it is a path index.
struct BsdeSolution {
  std::string scheme;
  TimeGrid grid;
  std::size_t n_states = 0;
  std::vector<double> Y;    ///< (M + 1) x n_states, time-major
  std::vector<double> Z;    ///< M x n_states
  std::vector<double> Psi;  ///< M x n_states
  std::vector<double> H;    ///< n_states terminal values
  std::vector<std::pair<std::string, double>> info;

  double y(std::size_t i, std::size_t s) const { return Y[i * n_states + s]; }
  double z(std::size_t i, std::size_t s) const { return Z[i * n_states + s]; }
  double psi(std::size_t i, std::size_t s) const { return Psi[i * n_states + s]; }
  double info_value(const std::string& key) const;
};

/// Smallest n with P(Poisson(lambda) > n) <= eps.
std::size_t poisson_truncation(double lambda, double eps);

/// Poisson(lambda) probabilities for k = 0..k_max.
std::vector<double> poisson_pmf(double lambda, std::size_t k_max);

/// Backward induction on the states (t_i, n):
///   Y_i(n) = E[Y_{i+1}(n + dN)] + f(0, Psi_i(n)) dt,
///   Psi_i(n) = Y_{i+1}(n + 1) - Y_{i+1}(n),  Z = 0,
/// with dN ~ Poisson(nu dt) truncated at tail mass tail_eps and n_max chosen
/// so that P(N_T > n_max) <= tail_eps. States beyond n_max are clamped to n_max.
BsdeSolution lattice_backward_induction(const MarketCoefficients& coeffs, double delta,
                                        const std::function<double(long)>& H_of_N,
                                        const TimeGrid& grid, double tail_eps = 1e-12);

/// Explicit H = 0 pure-jump solution driven by an auxiliary rate a(t).
struct PureInvestmentSolution {
  TimeGrid grid;
  std::vector<double> a;    ///< a(t_i), i = 0..M
  std::vector<double> A;    ///< A_i = -int_{t_i}^T a ds
  WealthPath wealth;        ///< X and pi* along each path
  std::vector<double> Y;    ///< n_paths x (M + 1), path-major
  std::vector<double> Psi;  ///< n_paths x M, path-major

  double y(std::size_t p, std::size_t i) const { return Y[p * (grid.M + 1) + i]; }
  double psi(std::size_t p, std::size_t i) const { return Psi[p * grid.M + i]; }
};

/// pi*_t = (1/ARA(X_{t-})) (a_t - mu_t/eta_t)/(mu_t - eta_t nu),
/// X by Euler along the paths, Y_t = (U')^{-1}(U'(X_t) e^{A_t}) - X_t and
///   Psi = (1/ARA(X_-)) (mu - eta a)/(mu - eta nu)
///       + (U')^{-1}(U'(X_-) e^A (1-m)) - (U')^{-1}(U'(X_-) e^A).
PureInvestmentSolution construct_pure_investment(const MarketCoefficients& coeffs,
                                                 const UtilityFunction& U,
                                                 const std::function<double(double)>& a,
                                                 const PathBundle& paths, double x0);

/// Rate function t -> canonical_a(mu(t), eta(t), nu).
std::function<double(double)> canonical_a_function(const MarketCoefficients& coeffs);

struct DriverBoundReport {
  double lambda = 0.0;      ///< 2 (nu/delta)(1-m)|ln(1-m)|
  double psi_star = 0.0;    ///< (1/delta) ln(1-m)
  double zeta = 0.0;        ///< -mu/(eta nu)
  double D1 = 0.0;
  double D2 = 0.0;
  /// max over the psi grid of f(0, psi) - [psi]_delta, and its value at psi*.
  double max_upper_gap = 0.0;
  double upper_gap_at_psi_star = 0.0;
  double max_A1_violation = 0.0;
  double max_A2_violation = 0.0;
  std::size_t n_points = 0;
};

/// Evaluates the two growth/monotonicity conditions on the exponential
/// driver over the (z, psi) grid:
///   A1: -lambda - delta z^2/2 - [-psi]_delta <= f(z,psi) <= lambda + delta z^2/2 + [psi]_delta
///   A2: (psi - psi')(zeta + mu/(eta nu)) >= 0 for every pair psi, psi'.
DriverBoundReport check_driver_bounds(double mu, double eta, double nu, double delta,
                                      std::span<const double> z_grid,
                                      std::span<const double> psi_grid);

}  // namespace jumpfbsde
