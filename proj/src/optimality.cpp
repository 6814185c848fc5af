#include "jumpfbsde/optimality.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "jumpfbsde/errors.hpp"

namespace jumpfbsde {

double residual_F(const StateTuple& w, double pi, double nu, const UtilityFunction& U) {
  if (!(w.sigma * w.sigma > 0.0)) {
    throw DomainError("residual_F requires sigma^2 > 0; use pure_jump_strategy for sigma = 0");
  }
  const double s = w.x + w.y;
  double F = U.du(s) * w.mu + U.d2u(s) * (w.z * w.sigma + pi * w.sigma * w.sigma);
  if (w.eta != 0.0) {
    F += (U.du(w.psi + pi * w.eta + s) - U.du(s)) * w.eta * nu;
  }
  return F;
}

GSolution solve_G(const StateTuple& w, double nu, const UtilityFunction& U, double tol) {
  GSolution out;
  auto F = [&](double pi) {
    ++out.evaluations;
    return residual_F(w, pi, nu, U);
  };

  const double F0 = F(0.0);
  if (!std::isfinite(F0)) {
    throw NumericalRangeError(fmt::format("solve_G: non-finite residual F(w, 0) = {}", F0));
  }
  if (F0 == 0.0) {
    out.converged = true;
    return out;
  }

  const double g = 0.5 * std::abs(U.d2u(w.x + w.y)) * w.sigma * w.sigma;
  const double half_width = std::abs(F0) / g;
  double lo = -half_width;
  double hi = half_width;
  out.bracket_lo = lo;
  out.bracket_hi = hi;

  double f_lo = F(lo);
  double f_hi = F(hi);
  if (!std::isfinite(f_lo) || !std::isfinite(f_hi)) {
    throw NumericalRangeError(
        fmt::format("solve_G: non-finite residual on bracket [{}, {}] (F = {}, {})", lo, hi, f_lo, f_hi));
  }
  if (!(f_lo > 0.0 && f_hi < 0.0)) {
    throw NumericalRangeError(
        fmt::format("solve_G: bracket [{}, {}] does not change sign (F = {}, {})", lo, hi, f_lo, f_hi));
  }

  auto finish = [&](double pi, double f) {
    out.pi = pi;
    out.residual = f;
    out.converged = std::abs(f) <= tol;
    return out;
  };

  // bisection down to a loose relative width
  double mid = 0.5 * (lo + hi);
  double f_mid = 0.0;
  for (int it = 0; it < 200; ++it) {
    mid = 0.5 * (lo + hi);
    f_mid = F(mid);
    if (!std::isfinite(f_mid)) {
      throw NumericalRangeError(fmt::format("solve_G: non-finite residual at pi = {} inside [{}, {}]", mid, lo, hi));
    }
    if (std::abs(f_mid) <= tol) return finish(mid, f_mid);
    if (f_mid > 0.0) {
      lo = mid;
      f_lo = f_mid;
    } else {
      hi = mid;
      f_hi = f_mid;
    }
    if (hi - lo <= 1e-6 * (1.0 + std::abs(mid))) break;
  }

  // secant polish, kept inside the shrinking bracket
  double a = lo, fa = f_lo;
  double b = hi, fb = f_hi;
  double best = std::abs(f_lo) < std::abs(f_hi) ? lo : hi;
  double f_best = std::abs(f_lo) < std::abs(f_hi) ? f_lo : f_hi;
  for (int it = 0; it < 100; ++it) {
    double next = b - fb * (b - a) / (fb - fa);
    if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
    const double f_next = F(next);
    if (!std::isfinite(f_next)) {
      throw NumericalRangeError(fmt::format("solve_G: non-finite residual at pi = {} inside [{}, {}]", next, lo, hi));
    }
    if (std::abs(f_next) < std::abs(f_best)) {
      best = next;
      f_best = f_next;
    }
    if (std::abs(f_next) <= tol) return finish(next, f_next);
    if (f_next > 0.0) lo = next; else hi = next;
    a = b;
    fa = fb;
    b = next;
    fb = f_next;
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(next))) break;
  }
  return finish(best, f_best);
}

double merton_strategy(const StateTuple& w, const UtilityFunction& U) {
  if (!(w.sigma * w.sigma > 0.0)) throw DomainError("merton_strategy requires sigma^2 > 0");
  const double s = w.x + w.y;
  // -U'/U'' = 1/ARA
  return (w.mu / (U.ara(s) * w.sigma) - w.z) / w.sigma;
}

double jump_ratio(double mu, double eta, double nu) {
  if (!(std::abs(eta) >= kEtaMin)) {
    throw DomainError(fmt::format("degenerate jump coefficient: |eta| = {} < eta_min = {}", std::abs(eta), kEtaMin));
  }
  if (!(nu > 0.0)) throw DomainError(fmt::format("jump intensity must be positive (nu = {})", nu));
  const double m = mu / (eta * nu);
  if (!(m < 1.0)) {
    throw DomainError(fmt::format("mu/(eta nu) < 1 violated: mu/(eta nu) = {}", m));
  }
  return m;
}

double pure_jump_strategy(double x, double y, double psi, double mu, double eta, double nu,
                          const UtilityFunction& U) {
  const double m = jump_ratio(mu, eta, nu);
  const double s = x + y;
  return (U.shift_marginal(s, std::log1p(-m)) - (psi + s)) / eta;
}

double exponential_pure_jump_strategy(double psi, double mu, double eta, double nu, double delta) {
  const double m = jump_ratio(mu, eta, nu);
  if (!(delta > 0.0)) throw DomainError(fmt::format("risk aversion must be positive (delta = {})", delta));
  return -(std::log1p(-m) / delta + psi) / eta;
}

double pure_jump_foc_residual(double x, double y, double psi, double pi, double mu, double eta,
                              double nu, const UtilityFunction& U) {
  const double s = x + y;
  const double gamma = U.du(psi + pi * eta + s) - U.du(s);
  return U.du(s) * mu + gamma * eta * nu;
}

}  // namespace jumpfbsde
