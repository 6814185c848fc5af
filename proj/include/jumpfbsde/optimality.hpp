#pragma once

#include "jumpfbsde/utility.hpp"

namespace jumpfbsde {

/// Pointwise state w = (x, y, z, psi, eta, mu, sigma): left limits of the
/// forward and backward components, the integrands of Y, and the market
/// coefficients at that instant.
struct StateTuple {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double psi = 0.0;
  double eta = 0.0;
  double mu = 0.0;
  double sigma = 0.0;
};

/// |eta| below this is treated as the eta = 0 branch.
inline constexpr double kEtaMin = 1e-8;
inline constexpr double kDefaultRootTol = 1e-12;

/// F(w, pi) = U'(x+y) mu + U''(x+y)(z sigma + pi sigma^2)
///          + (U'(psi + pi eta + x + y) - U'(x+y)) eta nu.
/// Requires sigma^2 > 0 (DomainError otherwise; use pure_jump_strategy).
double residual_F(const StateTuple& w, double pi, double nu, const UtilityFunction& U);

/// Root of F(w, .) together with its certificate.
struct GSolution {
  double pi = 0.0;
  double residual = 0.0;    ///< F(w, pi)
  double bracket_lo = 0.0;  ///< initial guaranteed bracket
  double bracket_hi = 0.0;
  int evaluations = 0;
  bool converged = false;   ///< |residual| <= tol
};

/// Unique root of F(w, .), which is strictly decreasing with slope below
/// g = U''(x+y) sigma^2 / 2 < 0. The bracket [-|F(w,0)|/|g|, |F(w,0)|/|g|]
/// always contains the root; it is narrowed by bisection and finished with
/// safeguarded secant steps.
GSolution solve_G(const StateTuple& w, double nu, const UtilityFunction& U,
                  double tol = kDefaultRootTol);

/// eta = 0 closed form: (1/sigma)(-(U'/U'')(x+y) mu/sigma - z).
double merton_strategy(const StateTuple& w, const UtilityFunction& U);

/// Explicit pure-jump optimum
///   (1/eta) ( (U')^{-1}( U'(x+y)(1 - m) ) - (psi + x + y) ),  m = mu/(eta nu).
double pure_jump_strategy(double x, double y, double psi, double mu, double eta, double nu,
                          const UtilityFunction& U);

/// Exponential specialisation: -(1/eta)( ln(1 - m)/delta + psi ).
double exponential_pure_jump_strategy(double psi, double mu, double eta, double nu, double delta);

/// Pure-jump first-order residual U'(x+y) mu + gamma eta nu with
/// gamma = U'(psi + pi eta + x + y) - U'(x+y).
double pure_jump_foc_residual(double x, double y, double psi, double pi, double mu, double eta,
                              double nu, const UtilityFunction& U);

/// m = mu/(eta nu) with the shared domain checks (|eta| >= kEtaMin, m < 1).
double jump_ratio(double mu, double eta, double nu);

}  // namespace jumpfbsde
