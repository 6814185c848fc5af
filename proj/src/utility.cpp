#include "jumpfbsde/utility.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "jumpfbsde/errors.hpp"

namespace jumpfbsde {

UtilityFunction::UtilityFunction(Family f, std::vector<double> w, std::vector<double> r)
    : family_(f), weights_(std::move(w)), rates_(std::move(r)) {
  if (rates_.empty() || rates_.size() != weights_.size()) {
    throw ConfigError(fmt::format("utility: weights and rates must be non-empty and of equal length (got {} and {})",
                                  weights_.size(), rates_.size()));
  }
  for (std::size_t j = 0; j < rates_.size(); ++j) {
    if (!(rates_[j] > 0.0) || !std::isfinite(rates_[j])) {
      throw ConfigError(fmt::format("utility: rate[{}] must be positive and finite (got {})", j, rates_[j]));
    }
    if (!(weights_[j] > 0.0) || !std::isfinite(weights_[j])) {
      throw ConfigError(fmt::format("utility: weight[{}] must be positive and finite (got {})", j, weights_[j]));
    }
    log_wd_.push_back(std::log(weights_[j]) + std::log(rates_[j]));
  }
  k_ = *std::min_element(rates_.begin(), rates_.end());
  rate_max_ = *std::max_element(rates_.begin(), rates_.end());
}

UtilityFunction UtilityFunction::exponential(double delta) {
  return UtilityFunction(Family::exponential, {1.0}, {delta});
}

UtilityFunction UtilityFunction::mixture(std::vector<double> weights, std::vector<double> rates) {
  return UtilityFunction(Family::exponential_mixture, std::move(weights), std::move(rates));
}

std::string UtilityFunction::label() const {
  if (family_ == Family::exponential) return fmt::format("exponential(delta={})", rates_[0]);
  return fmt::format("exponential_mixture(weights={}, rates={})", weights_, rates_);
}

// sum_j w_j d_j^power exp(-d_j x), with the overall sign left to the caller
double UtilityFunction::weighted_sum(double x, int power) const {
  double s = 0.0;
  for (std::size_t j = 0; j < rates_.size(); ++j) {
    const double e = std::log(weights_[j]) + power * std::log(rates_[j]) - rates_[j] * x;
    const double term = std::exp(e);
    if (!std::isfinite(term)) {
      throw NumericalRangeError(fmt::format("utility overflow evaluating exp(-{} * x) at x = {}", rates_[j], x));
    }
    s += term;
  }
  if (!std::isfinite(s)) throw NumericalRangeError(fmt::format("utility overflow at x = {}", x));
  return s;
}

double UtilityFunction::u(double x) const { return -weighted_sum(x, 0); }
double UtilityFunction::du(double x) const { return weighted_sum(x, 1); }
double UtilityFunction::d2u(double x) const { return -weighted_sum(x, 2); }
double UtilityFunction::d3u(double x) const { return weighted_sum(x, 3); }

double UtilityFunction::log_du(double x) const {
  if (family_ == Family::exponential) return log_wd_[0] - rates_[0] * x;
  double s = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < rates_.size(); ++j) s = std::max(s, log_wd_[j] - rates_[j] * x);
  double acc = 0.0;
  for (std::size_t j = 0; j < rates_.size(); ++j) acc += std::exp(log_wd_[j] - rates_[j] * x - s);
  return s + std::log(acc);
}

double UtilityFunction::ara(double x) const {
  if (family_ == Family::exponential) return rates_[0];
  double s = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < rates_.size(); ++j) s = std::max(s, log_wd_[j] - rates_[j] * x);
  double num = 0.0;
  double den = 0.0;
  for (std::size_t j = 0; j < rates_.size(); ++j) {
    const double e = std::exp(log_wd_[j] - rates_[j] * x - s);
    num += rates_[j] * e;
    den += e;
  }
  return num / den;
}

double UtilityFunction::inv_du(double m) const {
  if (!(m > 0.0) || !std::isfinite(m)) {
    throw DomainError(fmt::format("inverse marginal utility requires a positive finite argument (got {})", m));
  }
  return inv_du_log(std::log(m));
}

double UtilityFunction::inv_du_log(double log_m) const {
  if (!std::isfinite(log_m)) {
    throw DomainError(fmt::format("inverse marginal utility: non-finite log argument {}", log_m));
  }
  if (family_ == Family::exponential) return -(log_m - log_wd_[0]) / rates_[0];

  // log U' is strictly decreasing with slope -ara in [-rate_max, -k].
  auto g = [&](double x) { return log_du(x) - log_m; };
  double log_total = -std::numeric_limits<double>::infinity();
  for (double v : log_wd_) log_total = std::max(log_total, v);
  {
    double acc = 0.0;
    for (double v : log_wd_) acc += std::exp(v - log_total);
    log_total += std::log(acc);
  }
  const double seed = -(log_m - log_total) / rate_max_;

  double lo = seed;
  double hi = seed;
  double step = 1.0;
  double g_lo = g(lo);
  double g_hi = g_lo;
  for (int k = 0; k < 2000 && g_lo < 0.0; ++k) {
    hi = lo;
    g_hi = g_lo;
    lo -= step;
    step *= 2.0;
    g_lo = g(lo);
  }
  for (int k = 0; k < 2000 && g_hi > 0.0; ++k) {
    lo = hi;
    g_lo = g_hi;
    hi += step;
    step *= 2.0;
    g_hi = g(hi);
  }
  if (!(g_lo >= 0.0 && g_hi <= 0.0)) {
    throw NumericalRangeError(fmt::format("inverse marginal utility: no bracket found for log m = {}", log_m));
  }
  if (g_lo == 0.0) return lo;
  if (g_hi == 0.0) return hi;

  double x = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double gx = g(x);
    if (gx == 0.0) return x;
    if (gx > 0.0) lo = x; else hi = x;
    double next = x + gx / ara(x);  // Newton step on g, g' = -ara
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    const double tol = 1e-15 * std::max(1.0, std::abs(next));
    if (std::abs(next - x) <= tol || hi - lo <= tol) return next;
    x = next;
  }
  return x;
}

double UtilityFunction::shift_marginal(double w, double log_factor) const {
  if (family_ == Family::exponential) return w - log_factor / rates_[0];
  return inv_du_log(log_du(w) + log_factor);
}

UtilityValues evaluate(const UtilityFunction& U, double x) {
  if (!std::isfinite(x)) throw DomainError(fmt::format("utility evaluated at non-finite x = {}", x));
  return {U.u(x), U.du(x), U.d2u(x), U.d3u(x), U.ara(x)};
}

double invert_marginal(const UtilityFunction& U, double m) { return U.inv_du(m); }

}  // namespace jumpfbsde
