#include "jumpfbsde/bsde.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "jumpfbsde/errors.hpp"
#include "jumpfbsde/optimality.hpp"
#include "jumpfbsde/parallel.hpp"

namespace jumpfbsde {

double bracket_delta(double q, double nu, double delta) {
  const double dq = delta * q;
  return (nu / delta) * (std::expm1(dq) - dq);
}

double exponential_driver(double z, double psi, double mu, double eta, double nu, double delta) {
  const double m = jump_ratio(mu, eta, nu);
  const double l = std::log1p(-m);
  return (nu / delta) * (1.0 - m) * l - (mu / eta) * (psi - 1.0 / delta) - 0.5 * delta * z * z;
}

double exponential_bsde_integrand(double z, double psi, double mu, double eta, double nu, double delta) {
  const double m = jump_ratio(mu, eta, nu);
  const double l = std::log1p(-m);
  return 0.5 * delta * z * z - (nu / delta) * (1.0 - m) * l + (mu / eta) * (psi - 1.0 / delta);
}

double canonical_a(double mu, double eta, double nu) {
  const double m = jump_ratio(mu, eta, nu);
  return (m + (1.0 - m) * std::log1p(-m)) * nu;
}

std::vector<double> tail_integrals(const TimeGrid& grid, const std::function<double(double)>& f) {
  const std::size_t M = grid.M;
  const double h = grid.dt();
  std::vector<double> out(M + 1, 0.0);
  double f_right = f(grid.t(M));
  for (std::size_t i = M; i-- > 0;) {
    const double t0 = grid.t(i);
    const double f_left = f(t0);
    const double f_mid = f(t0 + 0.5 * h);
    out[i] = out[i + 1] + h / 6.0 * (f_left + 4.0 * f_mid + f_right);
    f_right = f_left;
  }
  return out;
}

std::function<double(double)> canonical_a_function(const MarketCoefficients& coeffs) {
  return [coeffs](double t) { return canonical_a(coeffs.mu(t), coeffs.eta(t), coeffs.nu); };
}

DeterministicY deterministic_Y(const MarketCoefficients& coeffs, double delta, double H_const,
                               const TimeGrid& grid) {
  if (coeffs.mode != MarketMode::pure_jump) {
    throw ConfigError("deterministic_Y requires a pure_jump market");
  }
  if (!(delta > 0.0)) throw DomainError(fmt::format("risk aversion must be positive (delta = {})", delta));
  grid.validate();
  const auto I = tail_integrals(grid, canonical_a_function(coeffs));
  DeterministicY out;
  out.grid = grid;
  out.Y.resize(I.size());
  for (std::size_t i = 0; i < I.size(); ++i) out.Y[i] = H_const + I[i] / delta;
  out.Y.back() = H_const;
  return out;
}

double BsdeSolution::info_value(const std::string& key) const {
  for (const auto& [k, v] : info) {
    if (k == key) return v;
  }
  throw ConfigError(fmt::format("solution metadata has no key '{}'", key));
}

// ---------------------------------------------------------------- Poisson lattice

std::vector<double> poisson_pmf(double lambda, std::size_t k_max) {
  std::vector<double> p(k_max + 1, 0.0);
  if (lambda <= 0.0) {
    p[0] = 1.0;
    return p;
  }
  const double log_l = std::log(lambda);
  for (std::size_t k = 0; k <= k_max; ++k) {
    const double kd = static_cast<double>(k);
    p[k] = std::exp(-lambda + kd * log_l - std::lgamma(kd + 1.0));
  }
  return p;
}

std::size_t poisson_truncation(double lambda, double eps) {
  if (lambda <= 0.0) return 0;
  const auto k_hi = static_cast<std::size_t>(std::ceil(lambda + 40.0 * std::sqrt(lambda) + 60.0));
  const auto p = poisson_pmf(lambda, k_hi);
  // tail[n] = P(X > n)
  std::vector<double> tail(k_hi + 1, 0.0);
  double acc = 0.0;
  for (std::size_t n = k_hi + 1; n-- > 0;) {
    tail[n] = acc;
    acc += p[n];
  }
  for (std::size_t n = 0; n <= k_hi; ++n) {
    if (tail[n] <= eps) return n;
  }
  return k_hi;
}

BsdeSolution lattice_backward_induction(const MarketCoefficients& coeffs, double delta,
                                        const std::function<double(long)>& H_of_N,
                                        const TimeGrid& grid, double tail_eps) {
  if (coeffs.mode != MarketMode::pure_jump) {
    throw ConfigError("lattice_backward_induction requires a pure_jump market");
  }
  if (!(delta > 0.0)) throw DomainError(fmt::format("risk aversion must be positive (delta = {})", delta));
  if (!(tail_eps > 0.0 && tail_eps < 1.0)) {
    throw ConfigError(fmt::format("tail_eps must lie in (0, 1) (got {})", tail_eps));
  }
  coeffs.validate(grid);

  const std::size_t M = grid.M;
  const double dt = grid.dt();
  const double nu = coeffs.nu;
  const std::size_t n_max = poisson_truncation(nu * grid.T, tail_eps);
  const std::size_t k_max = std::max<std::size_t>(1, poisson_truncation(nu * dt, tail_eps));
  auto pk = poisson_pmf(nu * dt, k_max);
  double kept = 0.0;
  for (double v : pk) kept += v;
  // lump the step tail into k_max so each row is a probability vector
  pk[k_max] += std::max(0.0, 1.0 - kept);

  const std::size_t S = n_max + 1;
  BsdeSolution sol;
  sol.scheme = "poisson_lattice";
  sol.grid = grid;
  sol.n_states = S;
  sol.Y.assign((M + 1) * S, 0.0);
  sol.Z.assign(M * S, 0.0);
  sol.Psi.assign(M * S, 0.0);
  sol.H.resize(S);

  for (std::size_t n = 0; n < S; ++n) {
    const double h = H_of_N(static_cast<long>(n));
    if (!std::isfinite(h)) {
      throw ConfigError(fmt::format("liability H(n) is not finite at n = {} (lattice range 0..{})", n, n_max));
    }
    sol.H[n] = h;
    sol.Y[M * S + n] = h;
  }

  for (std::size_t i = M; i-- > 0;) {
    const double t = grid.t(i);
    const double mu = coeffs.mu(t);
    const double eta = coeffs.eta(t);
    const double* next = sol.Y.data() + (i + 1) * S;
    double* cur = sol.Y.data() + i * S;
    double* psi = sol.Psi.data() + i * S;
    for (std::size_t n = 0; n < S; ++n) {
      double expect = 0.0;
      for (std::size_t k = 0; k <= k_max; ++k) expect += pk[k] * next[std::min(n + k, n_max)];
      const double jump = next[std::min(n + 1, n_max)] - next[n];
      psi[n] = jump;
      cur[n] = expect + exponential_driver(0.0, jump, mu, eta, nu, delta) * dt;
    }
  }

  sol.info = {{"n_max", static_cast<double>(n_max)},
              {"step_k_max", static_cast<double>(k_max)},
              {"step_truncated_mass", std::max(0.0, 1.0 - kept)},
              {"tail_eps", tail_eps},
              {"delta", delta}};
  return sol;
}

// ------------------------------------------------------------ pure investment

PureInvestmentSolution construct_pure_investment(const MarketCoefficients& coeffs,
                                                 const UtilityFunction& U,
                                                 const std::function<double(double)>& a,
                                                 const PathBundle& paths, double x0) {
  if (coeffs.mode != MarketMode::pure_jump) {
    throw ConfigError("construct_pure_investment requires a pure_jump market");
  }
  const TimeGrid& grid = paths.grid;
  const std::size_t M = grid.M;
  const double nu = coeffs.nu;

  PureInvestmentSolution sol;
  sol.grid = grid;
  sol.a.resize(M + 1);
  for (std::size_t i = 0; i <= M; ++i) {
    sol.a[i] = a(grid.t(i));
    if (!std::isfinite(sol.a[i])) {
      throw ConfigError(fmt::format("auxiliary rate a(t) is not finite at t = {}", grid.t(i)));
    }
  }
  const auto I = tail_integrals(grid, a);
  sol.A.resize(M + 1);
  for (std::size_t i = 0; i <= M; ++i) sol.A[i] = -I[i];
  sol.A[M] = 0.0;

  // coefficient of 1/ARA in pi*, and log(1 - m), per step
  std::vector<double> ratio(M), log1m(M);
  for (std::size_t i = 0; i < M; ++i) {
    const double t = grid.t(i);
    const double mu = coeffs.mu(t);
    const double eta = coeffs.eta(t);
    const double denom = mu - eta * nu;
    if (denom == 0.0) {
      throw DomainError(fmt::format("mu - eta nu = 0 at t = {} (degenerate pure-investment strategy)", t));
    }
    log1m[i] = std::log1p(-jump_ratio(mu, eta, nu));
    ratio[i] = (sol.a[i] - mu / eta) / denom;
  }

  const Strategy pi_star(
      "pure_investment",
      [&](const StrategyState& s) { return ratio[s.step] / U.ara(s.x); });
  sol.wealth = integrate_wealth(paths, coeffs, pi_star, x0);

  const std::size_t n = paths.n_paths;
  sol.Y.assign(n * (M + 1), 0.0);
  sol.Psi.assign(n * M, 0.0);
  parallel_chunks(n, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) {
      for (std::size_t i = 0; i < M; ++i) {
        const double x = sol.wealth.x(p, i);
        const double shifted = U.shift_marginal(x, sol.A[i]);
        sol.Y[p * (M + 1) + i] = shifted - x;
        // (mu - eta a)/(mu - eta nu) = -eta * ratio
        const double eta = coeffs.eta(grid.t(i));
        sol.Psi[p * M + i] = -eta * ratio[i] / U.ara(x) + U.shift_marginal(x, sol.A[i] + log1m[i]) - shifted;
      }
      sol.Y[p * (M + 1) + M] = 0.0;
    }
  });
  return sol;
}

// ---------------------------------------------------------------- driver bounds

DriverBoundReport check_driver_bounds(double mu, double eta, double nu, double delta,
                                      std::span<const double> z_grid,
                                      std::span<const double> psi_grid) {
  const double m = jump_ratio(mu, eta, nu);
  if (!(delta > 0.0)) throw DomainError(fmt::format("risk aversion must be positive (delta = {})", delta));
  const double l = std::log1p(-m);

  DriverBoundReport r;
  r.psi_star = l / delta;
  r.lambda = 2.0 * (nu / delta) * (1.0 - m) * std::abs(l);
  r.zeta = -mu / (eta * nu);
  r.D1 = std::min(r.zeta, 0.0);
  r.D2 = std::max(r.zeta, 0.0);
  r.upper_gap_at_psi_star = exponential_driver(0.0, r.psi_star, mu, eta, nu, delta) - bracket_delta(r.psi_star, nu, delta);
  r.max_upper_gap = -std::numeric_limits<double>::infinity();

  for (double z : z_grid) {
    for (double psi : psi_grid) {
      const double f = exponential_driver(z, psi, mu, eta, nu, delta);
      const double quad = 0.5 * delta * z * z;
      const double lower = -r.lambda - quad - bracket_delta(-psi, nu, delta);
      const double upper = r.lambda + quad + bracket_delta(psi, nu, delta);
      r.max_A1_violation = std::max({r.max_A1_violation, lower - f, f - upper});
      if (z == z_grid.front()) {
        r.max_upper_gap = std::max(r.max_upper_gap, exponential_driver(0.0, psi, mu, eta, nu, delta) - bracket_delta(psi, nu, delta));
      }
      ++r.n_points;
    }
  }
  const double slack = r.zeta + mu / (eta * nu);
  for (double psi : psi_grid) {
    for (double psi2 : psi_grid) {
      r.max_A2_violation = std::max(r.max_A2_violation, -(psi - psi2) * slack);
    }
  }
  return r;
}

}  // namespace jumpfbsde
