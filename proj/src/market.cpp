#include "jumpfbsde/market.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include <fmt/format.h>

#include "jumpfbsde/errors.hpp"
#include "jumpfbsde/parallel.hpp"
#include "jumpfbsde/rng.hpp"

namespace jumpfbsde {

void TimeGrid::validate() const {
  if (!(T > 0.0) || !std::isfinite(T)) {
    throw ConfigError(fmt::format("grid.T must be positive and finite (got {})", T));
  }
  if (M == 0) throw ConfigError("grid.M must be a positive integer");
}

// ---------------------------------------------------------------- TimeFunction

TimeFunction TimeFunction::constant(double c) {
  TimeFunction f;
  f.kind_ = Kind::constant;
  f.values_ = {c};
  f.breaks_.clear();
  f.label_ = fmt::format("constant({})", c);
  return f;
}

TimeFunction TimeFunction::piecewise(std::vector<double> breaks, std::vector<double> values) {
  if (values.size() != breaks.size() + 1) {
    throw ConfigError(fmt::format("piecewise function needs breaks.size() + 1 values (got {} breaks, {} values)",
                                  breaks.size(), values.size()));
  }
  if (!std::is_sorted(breaks.begin(), breaks.end())) {
    throw ConfigError("piecewise function breaks must be sorted");
  }
  TimeFunction f;
  f.kind_ = Kind::piecewise;
  f.breaks_ = std::move(breaks);
  f.values_ = std::move(values);
  f.label_ = "piecewise";
  return f;
}

TimeFunction TimeFunction::affine(double a, double b) {
  TimeFunction f;
  f.kind_ = Kind::affine;
  f.values_ = {a, b};
  f.breaks_.clear();
  f.label_ = fmt::format("affine({}, {})", a, b);
  return f;
}

TimeFunction TimeFunction::custom(std::string label, std::function<double(double)> fn) {
  TimeFunction f;
  f.kind_ = Kind::custom;
  f.values_.clear();
  f.breaks_.clear();
  f.custom_ = std::move(fn);
  f.label_ = std::move(label);
  return f;
}

double TimeFunction::operator()(double t) const {
  switch (kind_) {
    case Kind::constant:
      return values_[0];
    case Kind::piecewise: {
      const auto it = std::upper_bound(breaks_.begin(), breaks_.end(), t);
      return values_[static_cast<std::size_t>(it - breaks_.begin())];
    }
    case Kind::affine:
      return values_[0] + values_[1] * t;
    case Kind::custom:
      return custom_(t);
  }
  return 0.0;
}

std::string to_string(MarketMode mode) {
  return mode == MarketMode::diffusive ? "diffusive" : "pure_jump";
}

// ------------------------------------------------------------ MarketCoefficients

void MarketCoefficients::validate(const TimeGrid& grid) const {
  grid.validate();
  if (!std::isfinite(nu) || nu < 0.0 || (nu == 0.0 && !allow_zero_intensity)) {
    throw ConfigError(fmt::format("nu > 0 violated: nu = {}", nu));
  }
  if (!(s0 > 0.0)) throw ConfigError(fmt::format("s0 > 0 violated: s0 = {}", s0));

  const auto& b = bounds;
  if (mode == MarketMode::pure_jump) {
    if (std::isnan(b.c1) || std::isnan(b.c2)) {
      throw ConfigError("pure_jump market requires declared bounds c1 and c2");
    }
    if (!(b.c1 <= b.c2)) {
      throw ConfigError(fmt::format("c1 <= c2 violated: c1 = {}, c2 = {}", b.c1, b.c2));
    }
    if (!(b.c2 < nu)) {
      throw ConfigError(fmt::format("c2 < nu violated: c2 = {}, nu = {}", b.c2, nu));
    }
    if (!(b.eta_min > 0.0)) {
      throw ConfigError(fmt::format("eta_min > 0 violated: eta_min = {}", b.eta_min));
    }
  } else if (!(b.sigma_min > 0.0)) {
    throw ConfigError(fmt::format("sigma_min > 0 violated: sigma_min = {}", b.sigma_min));
  }

  const std::size_t n_samples = 10 * grid.M;
  for (std::size_t k = 0; k <= n_samples; ++k) {
    const double t = grid.T * static_cast<double>(k) / static_cast<double>(n_samples);
    const double mu_t = mu(t);
    const double sigma_t = sigma(t);
    const double eta_t = eta(t);
    if (!std::isfinite(mu_t) || std::abs(mu_t) > b.mu_max) {
      throw ConfigError(fmt::format("|mu(t)| <= mu_max violated at t = {}: mu = {}, mu_max = {}", t, mu_t, b.mu_max));
    }
    if (!std::isfinite(sigma_t) || sigma_t < 0.0 || sigma_t > b.sigma_max) {
      throw ConfigError(fmt::format("0 <= sigma(t) <= sigma_max violated at t = {}: sigma = {}, sigma_max = {}",
                                    t, sigma_t, b.sigma_max));
    }
    if (!std::isfinite(eta_t) || std::abs(eta_t) > b.eta_max) {
      throw ConfigError(fmt::format("|eta(t)| <= eta_max violated at t = {}: eta = {}, eta_max = {}", t, eta_t, b.eta_max));
    }
    if (!(eta_t > -1.0 + 1e-6)) {
      throw ConfigError(fmt::format("eta(t) > -1 + 1e-6 violated at t = {}: eta = {}", t, eta_t));
    }
    if (mode == MarketMode::diffusive) {
      if (!(sigma_t * sigma_t >= b.sigma_min * b.sigma_min)) {
        throw ConfigError(fmt::format("sigma(t)^2 >= sigma_min^2 violated at t = {}: sigma = {}, sigma_min = {}",
                                      t, sigma_t, b.sigma_min));
      }
    } else {
      if (sigma_t != 0.0) {
        throw ConfigError(fmt::format("pure_jump requires sigma == 0: sigma({}) = {}", t, sigma_t));
      }
      if (!(std::abs(eta_t) >= b.eta_min)) {
        throw ConfigError(fmt::format("|eta(t)| >= eta_min violated at t = {}: eta = {}, eta_min = {}", t, eta_t, b.eta_min));
      }
      const double ratio = mu_t / eta_t;
      if (!(ratio >= b.c1 && ratio <= b.c2)) {
        throw ConfigError(fmt::format("c1 <= mu/eta <= c2 violated at t = {}: mu/eta = {}, c1 = {}, c2 = {}",
                                      t, ratio, b.c1, b.c2));
      }
    }
  }
}

MarketCoefficients MarketCoefficients::constant_pure_jump(double mu, double eta, double nu) {
  MarketCoefficients c;
  c.mu = TimeFunction::constant(mu);
  c.sigma = TimeFunction::constant(0.0);
  c.eta = TimeFunction::constant(eta);
  c.nu = nu;
  c.mode = MarketMode::pure_jump;
  c.bounds.c1 = mu / eta;
  c.bounds.c2 = mu / eta;
  return c;
}

MarketCoefficients MarketCoefficients::constant_diffusive(double mu, double sigma, double eta, double nu) {
  MarketCoefficients c;
  c.mu = TimeFunction::constant(mu);
  c.sigma = TimeFunction::constant(sigma);
  c.eta = TimeFunction::constant(eta);
  c.nu = nu;
  c.mode = MarketMode::diffusive;
  return c;
}

StepCoefficients::StepCoefficients(const MarketCoefficients& coeffs, const TimeGrid& grid)
    : mu(grid.M), sigma(grid.M), eta(grid.M), nu(coeffs.nu), dt(grid.dt()) {
  for (std::size_t i = 0; i < grid.M; ++i) {
    const double t = grid.t(i);
    mu[i] = coeffs.mu(t);
    sigma[i] = coeffs.sigma(t);
    eta[i] = coeffs.eta(t);
  }
}

// ------------------------------------------------------------------ PathBundle

long PathBundle::count(std::size_t p, std::size_t i) const {
  long n = 0;
  const std::int32_t* row = dN.data() + p * grid.M;
  for (std::size_t k = 0; k < i; ++k) n += row[k];
  return n;
}

PathBundle simulate_paths(const MarketCoefficients& coeffs, const TimeGrid& grid,
                          std::size_t n_paths, std::uint64_t seed, std::size_t first_stream) {
  coeffs.validate(grid);
  if (n_paths == 0) throw ConfigError("n_paths must be >= 1");

  PathBundle b;
  b.grid = grid;
  b.nu = coeffs.nu;
  b.seed = seed;
  b.n_paths = n_paths;
  b.first_stream = first_stream;
  b.dW.resize(n_paths * grid.M);
  b.dN.resize(n_paths * grid.M);

  const double dt = grid.dt();
  parallel_chunks(n_paths, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) {
      const PathStream stream(seed, first_stream + p, dt, coeffs.nu);
      for (std::size_t i = 0; i < grid.M; ++i) {
        const Increment inc = stream.draw(i);
        b.dW[p * grid.M + i] = inc.dW;
        b.dN[p * grid.M + i] = static_cast<std::int32_t>(inc.dN);
      }
    }
  });
  return b;
}

// -------------------------------------------------------------------- Strategy

Strategy::Strategy(std::string label, Fn fn, double bound)
    : label_(std::move(label)), fn_(std::move(fn)), bound_(bound) {}

Strategy Strategy::constant(double c) {
  return Strategy(fmt::format("constant({})", c), [c](const StrategyState&) { return c; }, std::abs(c));
}

Strategy Strategy::step_before(double t_cut, double value) {
  return Strategy(fmt::format("{}*1{{t<={}}}", value, t_cut),
                  [t_cut, value](const StrategyState& s) { return s.t <= t_cut ? value : 0.0; },
                  std::abs(value));
}

Strategy Strategy::plus(double eps, const Strategy& h) const {
  const double b = bound_ + std::abs(eps) * h.bound_;
  return Strategy(fmt::format("{} + {}*({})", label_, eps, h.label_),
                  [base = *this, eps, h](const StrategyState& s) { return base(s) + eps * h(s); }, b);
}

Strategy Strategy::scaled(double a) const {
  return Strategy(fmt::format("{}*({})", a, label_),
                  [base = *this, a](const StrategyState& s) { return a * base(s); },
                  std::abs(a) * bound_);
}

double Strategy::operator()(const StrategyState& s) const {
  const double v = fn_(s);
  if (!std::isfinite(v)) {
    throw NumericalRangeError(fmt::format("strategy '{}' returned a non-finite value", label_));
  }
  if (std::abs(v) > bound_ * (1.0 + 1e-12)) {
    throw DomainError(fmt::format("strategy '{}' value {} exceeds its declared bound {}", label_, v, bound_));
  }
  return v;
}

// ------------------------------------------------------------- wealth integration

WealthPath integrate_wealth(const PathBundle& paths, const MarketCoefficients& coeffs,
                            const Strategy& strategy, double x0) {
  const TimeGrid& grid = paths.grid;
  const std::size_t M = grid.M;
  const StepCoefficients sc(coeffs, grid);
  const double dt = grid.dt();

  WealthPath out;
  out.x0 = x0;
  out.label = strategy.label();
  out.n_paths = paths.n_paths;
  out.M = M;
  out.X.resize(paths.n_paths * (M + 1));
  out.pi.resize(paths.n_paths * M);

  parallel_chunks(paths.n_paths, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) {
      double* X = out.X.data() + p * (M + 1);
      double* pi = out.pi.data() + p * M;
      StrategyState s;
      s.path = p;
      X[0] = x0;
      for (std::size_t i = 0; i < M; ++i) {
        s.step = i;
        s.t = grid.t(i);
        s.x = X[i];
        double v = 0.0;
        try {
          v = strategy(s);
        } catch (const DomainError& e) {
          throw DomainError(fmt::format("strategy evaluation failed at path {}, step {}: {}", p, i, e.what()));
        } catch (const Error& e) {
          throw NumericalRangeError(fmt::format("strategy evaluation failed at path {}, step {}: {}", p, i, e.what()));
        }
        pi[i] = v;
        const double dW = paths.dw(p, i);
        const long dN = paths.dcount(p, i);
        const double dn = static_cast<double>(dN) - sc.nu * dt;
        X[i + 1] = X[i] + v * (sc.mu[i] * dt + sc.sigma[i] * dW + sc.eta[i] * dn);
        s.n += dN;
        s.w += dW;
      }
    }
  });
  return out;
}

WealthPath perturbation_wealth(const PathBundle& paths, const MarketCoefficients& coeffs,
                               const Strategy& h) {
  if (!std::isfinite(h.bound())) {
    throw DomainError(fmt::format("perturbation direction '{}' must declare a finite bound", h.label()));
  }
  return integrate_wealth(paths, coeffs, h, 0.0);
}

}  // namespace jumpfbsde
