#pragma once

#include <string>
#include <vector>

namespace jumpfbsde {

/// Utilities on the whole real line:
///   exponential(delta):          U(x) = -exp(-delta x)
///   exponential_mixture(w, d):   U(x) = -sum_j w_j exp(-d_j x)
/// Both are C-infinity, strictly increasing and concave, with absolute risk
/// aversion bounded below by k = min_j d_j.
class UtilityFunction {
 public:
  enum class Family { exponential, exponential_mixture };

  static UtilityFunction exponential(double delta);
  static UtilityFunction mixture(std::vector<double> weights, std::vector<double> rates);

  Family family() const { return family_; }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<double>& rates() const { return rates_; }
  /// Risk aversion of the exponential family (first rate for a mixture).
  double delta() const { return rates_.front(); }
  /// Declared lower bound on ARA.
  double k() const { return k_; }
  std::string label() const;

  // The derivative values throw NumericalRangeError when an exponential
  // overflows; log_du and ara are evaluated in log space and never overflow.
  double u(double x) const;
  double du(double x) const;
  double d2u(double x) const;
  double d3u(double x) const;
  double log_du(double x) const;
  double ara(double x) const;

  /// (U')^{-1}(m), m > 0.
  double inv_du(double m) const;
  /// (U')^{-1}(exp(log_m)).
  double inv_du_log(double log_m) const;
  /// (U')^{-1}(U'(w) * exp(log_factor)) without forming U'(w).
  double shift_marginal(double w, double log_factor) const;

 private:
  UtilityFunction(Family f, std::vector<double> w, std::vector<double> r);

  double weighted_sum(double x, int power) const;

  Family family_;
  std::vector<double> weights_;
  std::vector<double> rates_;
  std::vector<double> log_wd_;  // log(w_j d_j)
  double k_ = 0.0;
  double rate_max_ = 0.0;
};

struct UtilityValues {
  double u;
  double du;
  double d2u;
  double d3u;
  double ara;
};

UtilityValues evaluate(const UtilityFunction& U, double x);

/// x with U'(x) = m. Closed form for the exponential family; for a mixture,
/// bisection-safeguarded Newton on log U' from an expanding bracket.
double invert_marginal(const UtilityFunction& U, double m);

}  // namespace jumpfbsde
