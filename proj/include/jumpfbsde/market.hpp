#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace jumpfbsde {

/// Uniform discretization of [0, T] into M steps.
struct TimeGrid {
  double T = 1.0;
  std::size_t M = 100;

  double dt() const { return T / static_cast<double>(M); }
  double t(std::size_t i) const { return i == M ? T : static_cast<double>(i) * dt(); }
  void validate() const;
};

/// Deterministic coefficient as a function of time.
class TimeFunction {
 public:
  enum class Kind { constant, piecewise, affine, custom };

  TimeFunction() : values_{0.0}, label_("constant(0)") {}

  static TimeFunction constant(double c);
  /// values[k] applies on [breaks[k-1], breaks[k]); values.size() == breaks.size() + 1.
  static TimeFunction piecewise(std::vector<double> breaks, std::vector<double> values);
  static TimeFunction affine(double a, double b);
  static TimeFunction custom(std::string label, std::function<double(double)> f);

  double operator()(double t) const;

  Kind kind() const { return kind_; }
  bool is_constant() const { return kind_ == Kind::constant; }
  const std::vector<double>& breaks() const { return breaks_; }
  const std::vector<double>& values() const { return values_; }
  const std::string& label() const { return label_; }

 private:
  Kind kind_ = Kind::constant;
  std::vector<double> breaks_;
  std::vector<double> values_;
  std::function<double(double)> custom_;
  std::string label_;
};

enum class MarketMode { diffusive, pure_jump };

std::string to_string(MarketMode mode);

/// Declared bounds checked by MarketCoefficients::validate.
struct CoefficientBounds {
  double mu_max = 10.0;     ///< |mu(t)| <= mu_max
  double sigma_max = 10.0;  ///< sigma(t) <= sigma_max
  double eta_max = 10.0;    ///< |eta(t)| <= eta_max
  double sigma_min = 1e-4;  ///< diffusive: sigma(t)^2 >= sigma_min^2
  double eta_min = 1e-8;    ///< pure jump: |eta(t)| >= eta_min
  double c1 = std::numeric_limits<double>::quiet_NaN();  ///< pure jump: c1 <= mu/eta
  double c2 = std::numeric_limits<double>::quiet_NaN();  ///< pure jump: mu/eta <= c2 < nu
};

/// Market coefficients for dS/S_- = mu dt + sigma dW + eta dn, n = N - nu t.
///
/// Coefficients are deterministic time functions; every consumer reads them
/// through StepCoefficients, which is the single place a path-dependent
/// coefficient source would have to plug in.
struct MarketCoefficients {
  TimeFunction mu;
  TimeFunction sigma;
  TimeFunction eta;
  double nu = 1.0;
  double s0 = 1.0;
  MarketMode mode = MarketMode::diffusive;
  CoefficientBounds bounds;
  /// nu == 0 is accepted only when set (test-only degenerate market).
  bool allow_zero_intensity = false;

  /// Sampling-based check of every declared bound on a 10*M dense grid of
  /// [0, T]. Throws ConfigError naming the violated bound.
  void validate(const TimeGrid& grid) const;

  /// m(t) = mu(t) / (eta(t) nu).
  double m(double t) const { return mu(t) / (eta(t) * nu); }

  static MarketCoefficients constant_pure_jump(double mu, double eta, double nu);
  static MarketCoefficients constant_diffusive(double mu, double sigma, double eta, double nu);
};

/// Coefficients sampled at the left grid points t_0 .. t_{M-1}.
struct StepCoefficients {
  std::vector<double> mu;
  std::vector<double> sigma;
  std::vector<double> eta;
  double nu = 0.0;
  double dt = 0.0;

  StepCoefficients(const MarketCoefficients& coeffs, const TimeGrid& grid);
};

/// Simulated Brownian and Poisson increments for n_paths paths.
/// Path p uses the driver stream with index first_stream + p.
struct PathBundle {
  TimeGrid grid;
  double nu = 0.0;
  std::uint64_t seed = 0;
  std::size_t n_paths = 0;
  std::size_t first_stream = 0;
  std::vector<double> dW;         ///< n_paths x M, path-major
  std::vector<std::int32_t> dN;   ///< n_paths x M, path-major

  std::size_t steps() const { return grid.M; }
  double dw(std::size_t p, std::size_t i) const { return dW[p * grid.M + i]; }
  long dcount(std::size_t p, std::size_t i) const { return dN[p * grid.M + i]; }
  /// Compensated increment dn_i = dN_i - nu dt.
  double dn(std::size_t p, std::size_t i) const {
    return static_cast<double>(dN[p * grid.M + i]) - nu * grid.dt();
  }
  /// Cumulative count N at grid point i (N_0 = 0).
  long count(std::size_t p, std::size_t i) const;
};

/// Information available to a strategy at grid point t_i: values at t_i,
/// never the increments of step i.
struct StrategyState {
  std::size_t path = 0;
  std::size_t step = 0;
  double t = 0.0;
  double x = 0.0;  ///< wealth X_i
  long n = 0;      ///< jump count N_i
  double w = 0.0;  ///< Brownian value W_i
};

/// A predictable strategy pi(t_i, state). The declared bound, when finite,
/// is enforced at every evaluation.
class Strategy {
 public:
  using Fn = std::function<double(const StrategyState&)>;

  Strategy(std::string label, Fn fn, double bound = std::numeric_limits<double>::infinity());

  static Strategy constant(double c);
  /// value on t <= t_cut, 0 afterwards.
  static Strategy step_before(double t_cut, double value = 1.0);

  /// this + eps * h, evaluated pointwise.
  Strategy plus(double eps, const Strategy& h) const;
  Strategy scaled(double a) const;

  double operator()(const StrategyState& s) const;
  const std::string& label() const { return label_; }
  double bound() const { return bound_; }

 private:
  std::string label_;
  Fn fn_;
  double bound_;
};

/// Wealth paths X_i for i = 0..M and the strategy values used on each step.
struct WealthPath {
  double x0 = 0.0;
  std::string label;
  std::size_t n_paths = 0;
  std::size_t M = 0;
  std::vector<double> X;   ///< n_paths x (M + 1)
  std::vector<double> pi;  ///< n_paths x M

  double x(std::size_t p, std::size_t i) const { return X[p * (M + 1) + i]; }
  double terminal(std::size_t p) const { return X[p * (M + 1) + M]; }
  std::span<const double> path(std::size_t p) const {
    return {X.data() + p * (M + 1), M + 1};
  }
};

/// Draws i.i.d. Gaussian(0, dt) and Poisson(nu dt) increments per step from
/// counter-based streams keyed by (seed, stream index). Validates coeffs.
PathBundle simulate_paths(const MarketCoefficients& coeffs, const TimeGrid& grid,
                          std::size_t n_paths, std::uint64_t seed,
                          std::size_t first_stream = 0);

/// X_{i+1} = X_i + pi_i (mu_i dt + sigma_i dW_i + eta_i dn_i).
WealthPath integrate_wealth(const PathBundle& paths, const MarketCoefficients& coeffs,
                            const Strategy& strategy, double x0);

/// Gateaux direction X^{0,h}: integrate_wealth with x0 = 0. h must declare
/// a finite bound.
WealthPath perturbation_wealth(const PathBundle& paths, const MarketCoefficients& coeffs,
                               const Strategy& h);

}  // namespace jumpfbsde
