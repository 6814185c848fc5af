#include "jumpfbsde/verify.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "jumpfbsde/bsde.hpp"
#include "jumpfbsde/errors.hpp"
#include "jumpfbsde/optimality.hpp"
#include "jumpfbsde/parallel.hpp"
#include "jumpfbsde/rng.hpp"
#include "jumpfbsde/stats.hpp"

namespace jumpfbsde {
namespace {

struct PathEnd {
  long n_T = 0;
  double w_T = 0.0;
};

// Integrates every strategy on path p from the same increments; x[k] holds
// the terminal wealth of strategy k on return.
PathEnd run_path(const McSetup& mc, const StepCoefficients& sc, std::size_t p,
                 const std::vector<const Strategy*>& strategies, const std::vector<double>& x0,
                 std::vector<double>& x) {
  const TimeGrid& grid = mc.grid;
  const double dt = grid.dt();
  const PathStream stream(mc.seed, p, dt, sc.nu);
  x = x0;
  StrategyState s;
  s.path = p;
  for (std::size_t i = 0; i < grid.M; ++i) {
    s.step = i;
    s.t = grid.t(i);
    const Increment inc = stream.draw(i);
    const double ret = sc.mu[i] * dt + sc.sigma[i] * inc.dW + sc.eta[i] * (static_cast<double>(inc.dN) - sc.nu * dt);
    for (std::size_t k = 0; k < strategies.size(); ++k) {
      s.x = x[k];
      double v = 0.0;
      try {
        v = (*strategies[k])(s);
      } catch (const DomainError& e) {
        throw DomainError(fmt::format("strategy evaluation failed at path {}, step {}: {}", p, i, e.what()));
      }
      x[k] += v * ret;
    }
    s.n += inc.dN;
    s.w += inc.dW;
  }
  return {s.n, s.w};
}

void check_exclusions(std::size_t excluded, std::size_t n, const char* what) {
  if (static_cast<double>(excluded) > kExclusionBudget * static_cast<double>(n)) {
    throw NumericalRangeError(fmt::format("{}: {} of {} paths overflowed (budget {:.4g}%)", what, excluded, n,
                                          100.0 * kExclusionBudget));
  }
}

void check_setup(const McSetup& mc) {
  mc.grid.validate();
  if (mc.n_paths < 2) throw ConfigError(fmt::format("mc.n_paths must be at least 2 (got {})", mc.n_paths));
  mc.coeffs.validate(mc.grid);
}

// Per-path values via fn(p, out) -> false to exclude the path. Returns the
// merged statistics and the exclusion count.
std::pair<std::vector<RunningStats>, std::size_t> path_statistics(
    std::size_t n, std::size_t k, const std::function<bool(std::size_t, std::vector<double>&)>& fn) {
  std::vector<std::size_t> excluded(chunk_count(n), 0);
  std::vector<std::vector<RunningStats>> parts(chunk_count(n), std::vector<RunningStats>(k));
  parallel_chunks(n, [&](std::size_t c, std::size_t begin, std::size_t end) {
    std::vector<double> vals(k);
    for (std::size_t p = begin; p < end; ++p) {
      if (!fn(p, vals)) {
        ++excluded[c];
        continue;
      }
      for (std::size_t j = 0; j < k; ++j) parts[c][j].add(vals[j]);
    }
  });
  std::vector<RunningStats> out(k);
  std::size_t ex = 0;
  for (std::size_t c = 0; c < parts.size(); ++c) {
    for (std::size_t j = 0; j < k; ++j) out[j].merge(parts[c][j]);
    ex += excluded[c];
  }
  return {out, ex};
}

bool finite_all(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

GateauxEstimate gateaux_derivative(const Strategy& pi, const Strategy& h, const UtilityFunction& U,
                                   const Liability& H, const McSetup& mc) {
  check_setup(mc);
  if (!std::isfinite(h.bound())) {
    throw DomainError(fmt::format("perturbation direction '{}' must declare a finite bound", h.label()));
  }
  const StepCoefficients sc(mc.coeffs, mc.grid);
  const std::vector<const Strategy*> strategies{&pi, &h};
  const std::vector<double> x0{mc.x0, 0.0};
  auto [st, excluded] = path_statistics(mc.n_paths, 1, [&](std::size_t p, std::vector<double>& out) {
    std::vector<double> x;
    const PathEnd end = run_path(mc, sc, p, strategies, x0, x);
    try {
      out[0] = U.du(x[0] + H(end.n_T, end.w_T)) * x[1];
    } catch (const NumericalRangeError&) {
      return false;
    }
    return finite_all(out);
  });
  check_exclusions(excluded, mc.n_paths, "gateaux_derivative");
  return {st[0].mean, st[0].std_error(), st[0].n, excluded, h.label(), pi.label()};
}

GapEstimate utility_gap(const Strategy& pi_a, const Strategy& pi_b, const UtilityFunction& U,
                        const Liability& H, const McSetup& mc) {
  check_setup(mc);
  const StepCoefficients sc(mc.coeffs, mc.grid);
  const std::vector<const Strategy*> strategies{&pi_a, &pi_b};
  const std::vector<double> x0{mc.x0, mc.x0};
  auto [st, excluded] = path_statistics(mc.n_paths, 1, [&](std::size_t p, std::vector<double>& out) {
    std::vector<double> x;
    const PathEnd end = run_path(mc, sc, p, strategies, x0, x);
    const double hv = H(end.n_T, end.w_T);
    try {
      out[0] = U.u(x[0] + hv) - U.u(x[1] + hv);
    } catch (const NumericalRangeError&) {
      return false;
    }
    return finite_all(out);
  });
  check_exclusions(excluded, mc.n_paths, "utility_gap");
  return {st[0].mean, st[0].std_error(), st[0].n, excluded, pi_a.label(), pi_b.label()};
}

EpsilonScan epsilon_scan(const Strategy& pi, const Strategy& h, const std::vector<double>& eps,
                         const UtilityFunction& U, const Liability& H, const McSetup& mc) {
  check_setup(mc);
  if (eps.empty()) throw ConfigError("epsilon_scan: empty eps grid");
  const StepCoefficients sc(mc.coeffs, mc.grid);
  std::vector<Strategy> perturbed;
  perturbed.reserve(eps.size());
  for (double e : eps) perturbed.push_back(pi.plus(e, h));
  std::vector<const Strategy*> strategies;
  for (const auto& s : perturbed) strategies.push_back(&s);
  const std::vector<double> x0(eps.size(), mc.x0);

  std::size_t ref = 0;
  for (std::size_t k = 0; k < eps.size(); ++k) {
    if (eps[k] == 0.0) ref = k;
  }
  const std::size_t K = eps.size();
  auto [st, excluded] = path_statistics(mc.n_paths, 2 * K, [&](std::size_t p, std::vector<double>& out) {
    std::vector<double> x;
    const PathEnd end = run_path(mc, sc, p, strategies, x0, x);
    const double hv = H(end.n_T, end.w_T);
    try {
      for (std::size_t k = 0; k < K; ++k) out[k] = U.u(x[k] + hv);
    } catch (const NumericalRangeError&) {
      return false;
    }
    for (std::size_t k = 0; k < K; ++k) out[K + k] = out[k] - out[ref];
    return finite_all(out);
  });
  check_exclusions(excluded, mc.n_paths, "epsilon_scan");

  EpsilonScan scan;
  scan.eps = eps;
  for (std::size_t k = 0; k < K; ++k) {
    scan.expected_utility.push_back(st[k].mean);
    scan.gap.push_back(st[K + k].mean);
    scan.gap_se.push_back(st[K + k].std_error());
    if (scan.gap[k] > scan.gap[scan.argmax]) scan.argmax = k;
  }
  return scan;
}

// ------------------------------------------------------------ martingales

MartingaleReport martingale_diagnostic(const std::vector<double>& times,
                                       const std::vector<std::vector<double>>& values,
                                       std::optional<double> reference) {
  if (times.empty() || values.empty()) throw ConfigError("martingale_diagnostic: empty checkpoint set");
  if (times.size() != values.size()) {
    throw ConfigError(fmt::format("martingale_diagnostic: {} times but {} checkpoint rows", times.size(), values.size()));
  }
  const std::size_t n = values.front().size();
  for (const auto& row : values) {
    if (row.size() != n || n == 0) throw ConfigError("martingale_diagnostic: ragged or empty checkpoint rows");
  }
  MartingaleReport r;
  r.times = times;
  for (std::size_t c = 0; c < values.size(); ++c) {
    RunningStats level, diff;
    for (std::size_t p = 0; p < n; ++p) {
      level.add(values[c][p]);
      diff.add(values[c][p] - values[0][p]);
    }
    r.means.push_back(level.mean);
    r.std_errors.push_back(level.std_error());
    double dev = 0.0;
    if (reference) {
      const double d = std::abs(level.mean - *reference);
      dev = d == 0.0 ? 0.0 : d / level.std_error();
    } else {
      const double d = std::abs(diff.mean);
      dev = d == 0.0 ? 0.0 : d / diff.std_error();
    }
    r.max_std_deviation = std::max(r.max_std_deviation, dev);
  }
  r.reference = reference ? *reference : r.means.front();
  return r;
}

std::vector<std::size_t> checkpoint_steps(const TimeGrid& grid, std::size_t count) {
  if (count == 0) throw ConfigError("checkpoint count must be positive");
  std::vector<std::size_t> steps;
  for (std::size_t k = 0; k <= count; ++k) {
    const std::size_t i = (k * grid.M + count / 2) / count;
    if (steps.empty() || steps.back() != i) steps.push_back(i);
  }
  return steps;
}

std::vector<std::vector<double>> doleans_exponential(const McSetup& mc, const std::vector<std::size_t>& steps) {
  check_setup(mc);
  const StepCoefficients sc(mc.coeffs, mc.grid);
  const std::size_t M = mc.grid.M;
  const double dt = mc.grid.dt();
  std::vector<double> drift(M), log_jump(M);
  for (std::size_t i = 0; i < M; ++i) {
    const double m = jump_ratio(sc.mu[i], sc.eta[i], sc.nu);
    drift[i] = m * sc.nu * dt;
    log_jump[i] = std::log1p(-m);
  }
  std::vector<std::vector<double>> out(steps.size(), std::vector<double>(mc.n_paths));
  parallel_chunks(mc.n_paths, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) {
      const PathStream stream(mc.seed, p, dt, sc.nu);
      double logE = 0.0;
      std::size_t c = 0;
      for (std::size_t i = 0; i <= M && c < steps.size(); ++i) {
        while (c < steps.size() && steps[c] == i) out[c++][p] = std::exp(logE);
        if (i == M) break;
        const long dN = stream.draw(i).dN;
        logE += drift[i] + static_cast<double>(dN) * log_jump[i];
      }
    }
  });
  return out;
}

std::vector<std::vector<double>> pure_investment_marginal(const McSetup& mc, const UtilityFunction& U,
                                                          const std::vector<std::size_t>& steps) {
  check_setup(mc);
  if (mc.coeffs.mode != MarketMode::pure_jump) throw ConfigError("pure_investment_marginal requires a pure_jump market");
  const StepCoefficients sc(mc.coeffs, mc.grid);
  const TimeGrid& grid = mc.grid;
  const std::size_t M = grid.M;
  const double dt = grid.dt();
  const auto a = canonical_a_function(mc.coeffs);
  const auto I = tail_integrals(grid, a);
  std::vector<double> ratio(M);
  for (std::size_t i = 0; i < M; ++i) {
    const double denom = sc.mu[i] - sc.eta[i] * sc.nu;
    if (denom == 0.0) throw DomainError(fmt::format("mu - eta nu = 0 at step {}", i));
    ratio[i] = (a(grid.t(i)) - sc.mu[i] / sc.eta[i]) / denom;
  }
  std::vector<std::vector<double>> out(steps.size(), std::vector<double>(mc.n_paths));
  parallel_chunks(mc.n_paths, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) {
      const PathStream stream(mc.seed, p, dt, sc.nu);
      double x = mc.x0;
      std::size_t c = 0;
      for (std::size_t i = 0; i <= M && c < steps.size(); ++i) {
        const double A = i == M ? 0.0 : -I[i];
        while (c < steps.size() && steps[c] == i) out[c++][p] = std::exp(U.log_du(x) + A);
        if (i == M) break;
        const Increment inc = stream.draw(i);
        const double pi = ratio[i] / U.ara(x);
        x += pi * (sc.mu[i] * dt + sc.eta[i] * (static_cast<double>(inc.dN) - sc.nu * dt));
      }
    }
  });
  return out;
}

JumpIdentityReport jump_identity_check(const MarketCoefficients& coeffs, const UtilityFunction& U,
                                       double T, std::size_t n_paths, std::uint64_t seed, double x0) {
  if (coeffs.mode != MarketMode::pure_jump || !coeffs.mu.is_constant() || !coeffs.eta.is_constant()) {
    throw ConfigError("jump_identity_check requires a constant-coefficient pure_jump market");
  }
  if (U.family() != UtilityFunction::Family::exponential) {
    throw ConfigError("jump_identity_check requires the exponential family");
  }
  const double mu = coeffs.mu(0.0);
  const double eta = coeffs.eta(0.0);
  const double nu = coeffs.nu;
  const double m = jump_ratio(mu, eta, nu);
  const double delta = U.delta();
  const double a = canonical_a(mu, eta, nu);
  const double pi = exponential_pure_jump_strategy(0.0, mu, eta, nu, delta);
  const double flow = pi * (mu - eta * nu);
  const double target_drift = m * nu;
  const Philox4x32 gen(seed);

  struct Part {
    std::size_t jumps = 0;
    double ratio = 0.0;
    double drift = 0.0;
  };
  std::vector<Part> parts(chunk_count(n_paths));
  parallel_chunks(n_paths, [&](std::size_t c, std::size_t begin, std::size_t end) {
    Part& part = parts[c];
    for (std::size_t p = begin; p < end; ++p) {
      const auto lo = static_cast<std::uint32_t>(p);
      const auto hi = static_cast<std::uint32_t>(static_cast<std::uint64_t>(p) >> 32);
      double t = 0.0;
      double x = x0;
      double logL = U.log_du(x) - a * T;
      for (std::uint32_t k = 0;; ++k) {
        const auto b = gen({k, lo, hi, 2u});
        const double u = 1.0 - to_unit((static_cast<std::uint64_t>(b[0]) << 32) | b[1]);
        const double tau = std::min(T, t - std::log(u) / nu);
        const double x_minus = x + flow * (tau - t);
        const double logL_minus = U.log_du(x_minus) - a * (T - tau);
        if (tau - t >= 1e-3) {
          part.drift = std::max(part.drift, std::abs((logL_minus - logL) / (tau - t) - target_drift));
        }
        if (tau >= T) break;
        const double x_plus = x_minus + pi * eta;
        const double logL_plus = U.log_du(x_plus) - a * (T - tau);
        part.ratio = std::max(part.ratio, std::abs(std::exp(logL_plus - logL_minus) - (1.0 - m)));
        ++part.jumps;
        t = tau;
        x = x_plus;
        logL = logL_plus;
      }
    }
  });
  JumpIdentityReport r;
  for (const auto& part : parts) {
    r.n_jumps += part.jumps;
    r.max_ratio_error = std::max(r.max_ratio_error, part.ratio);
    r.max_drift_error = std::max(r.max_drift_error, part.drift);
  }
  return r;
}

// ------------------------------------------------------------ Q measure

std::vector<DriftEstimate> q_measure_drift_check(const Strategy& pi_star, const std::vector<Strategy>& tests,
                                                 const UtilityFunction& U, const Liability& H,
                                                 const McSetup& mc) {
  check_setup(mc);
  const StepCoefficients sc(mc.coeffs, mc.grid);
  const std::size_t n = mc.n_paths;
  const std::size_t K = tests.size();
  std::vector<const Strategy*> strategies{&pi_star};
  for (const auto& s : tests) strategies.push_back(&s);
  const std::vector<double> x0(K + 1, mc.x0);

  // per path: weight, then K gains; a NaN weight marks an excluded path
  std::vector<double> table(n * (K + 1));
  parallel_chunks(n, [&](std::size_t, std::size_t begin, std::size_t end) {
    std::vector<double> x;
    for (std::size_t p = begin; p < end; ++p) {
      const PathEnd e = run_path(mc, sc, p, strategies, x0, x);
      double* row = table.data() + p * (K + 1);
      try {
        row[0] = U.du(x[0] + H(e.n_T, e.w_T));
      } catch (const NumericalRangeError&) {
        row[0] = std::numeric_limits<double>::quiet_NaN();
      }
      for (std::size_t k = 0; k < K; ++k) row[k + 1] = x[k + 1] - x[0];
    }
  });

  std::size_t excluded = 0;
  for (std::size_t p = 0; p < n; ++p) {
    if (!std::isfinite(table[p * (K + 1)])) ++excluded;
  }
  check_exclusions(excluded, n, "q_measure_drift_check");
  auto ok = [&](std::size_t p) { return std::isfinite(table[p * (K + 1)]); };

  const double sw = ordered_sum(n, [&](std::size_t p) { return ok(p) ? table[p * (K + 1)] : 0.0; });
  const double sw2 = ordered_sum(n, [&](std::size_t p) {
    const double w = ok(p) ? table[p * (K + 1)] : 0.0;
    return w * w;
  });
  const double ess = sw * sw / sw2;
  if (!(ess >= 0.01 * static_cast<double>(n - excluded))) {
    throw VerificationFailure(fmt::format("q_measure_drift_check: effective sample size {:.1f} is below 1% of {} paths",
                                          ess, n - excluded));
  }

  std::vector<DriftEstimate> out;
  for (std::size_t k = 0; k < K; ++k) {
    const auto g = [&](std::size_t p) { return table[p * (K + 1) + k + 1]; };
    const double num = ordered_sum(n, [&](std::size_t p) { return ok(p) ? table[p * (K + 1)] * g(p) : 0.0; });
    const double est = num / sw;
    const double var = ordered_sum(n, [&](std::size_t p) {
      if (!ok(p)) return 0.0;
      const double d = table[p * (K + 1)] * (g(p) - est);
      return d * d;
    });
    RunningStats plain;
    for (std::size_t p = 0; p < n; ++p) {
      if (ok(p)) plain.add(g(p));
    }
    DriftEstimate d;
    d.strategy = tests[k].label();
    d.weighted_mean = est;
    d.weighted_se = std::sqrt(var) / sw;
    d.unweighted_mean = plain.mean;
    d.unweighted_se = plain.std_error();
    d.ess = ess;
    out.push_back(d);
  }
  return out;
}

// ------------------------------------------------------------ hypotheses

HypothesisAudit hypothesis_audit(double k, const std::function<double(double)>& u,
                                 const std::function<double(double)>& du, const std::vector<double>& xi) {
  if (xi.size() < 8) throw ConfigError(fmt::format("hypothesis_audit needs at least 8 samples (got {})", xi.size()));
  HypothesisAudit r;
  r.k = k;
  r.h1 = k > 0.0;
  const std::size_t n = xi.size();
  r.sample_sizes = {n / 8, n / 4, n / 2, n};

  auto safe = [](const std::function<double(double)>& f, double x) {
    try {
      return f(x);
    } catch (const NumericalRangeError&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  double s2 = 0.0, s1 = 0.0;
  std::size_t next = 0;
  for (std::size_t p = 0; p < n; ++p) {
    const double d = safe(du, xi[p]);
    s2 += d * d;
    s1 += std::abs(safe(u, xi[p]));
    if (p + 1 == r.sample_sizes[next]) {
      r.second_moment.push_back(s2 / static_cast<double>(p + 1));
      r.abs_utility.push_back(s1 / static_cast<double>(p + 1));
      ++next;
    }
  }

  bool finite = true;
  for (std::size_t j = 0; j < r.sample_sizes.size(); ++j) {
    finite = finite && std::isfinite(r.second_moment[j]) && std::isfinite(r.abs_utility[j]);
  }
  if (finite) {
    for (std::size_t j = 1; j < r.sample_sizes.size(); ++j) {
      for (const auto* v : {&r.second_moment, &r.abs_utility}) {
        const double cur = (*v)[j];
        const double prev = (*v)[j - 1];
        const double rel = cur == prev ? 0.0 : std::abs(cur - prev) / std::abs(cur);
        r.max_relative_change = std::max(r.max_relative_change, rel);
      }
    }
  } else {
    r.max_relative_change = std::numeric_limits<double>::infinity();
  }
  r.stable = finite && r.max_relative_change <= 0.05;
  r.status = r.h1 && r.stable ? "pass" : "warn";
  if (!r.h1) r.note = "absolute risk aversion bound k is not positive";
  else if (!finite) r.note = "moment estimate is not finite";
  else if (!r.stable) r.note = fmt::format("moment estimates moved by {:.3g} under sample doubling", r.max_relative_change);
  return r;
}

HypothesisAudit hypothesis_audit(const UtilityFunction& U, const std::vector<double>& xi) {
  return hypothesis_audit(
      U.k(), [&](double x) { return U.u(x); }, [&](double x) { return std::exp(U.log_du(x)); }, xi);
}

std::vector<double> terminal_values(const Strategy& pi, const Liability& H, const McSetup& mc) {
  check_setup(mc);
  const StepCoefficients sc(mc.coeffs, mc.grid);
  const std::vector<const Strategy*> strategies{&pi};
  const std::vector<double> x0{mc.x0};
  std::vector<double> out(mc.n_paths);
  parallel_chunks(mc.n_paths, [&](std::size_t, std::size_t begin, std::size_t end) {
    std::vector<double> x;
    for (std::size_t p = begin; p < end; ++p) {
      const PathEnd e = run_path(mc, sc, p, strategies, x0, x);
      out[p] = x[0] + H(e.n_T, e.w_T);
    }
  });
  return out;
}

}  // namespace jumpfbsde
