#include "jumpfbsde/picard.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include <fmt/format.h>

#include "jumpfbsde/errors.hpp"
#include "jumpfbsde/parallel.hpp"
#include "jumpfbsde/regression.hpp"
#include "jumpfbsde/stats.hpp"

namespace jumpfbsde {
namespace {

constexpr int kMaxDegree = 8;
constexpr std::size_t kMaxFeatures = 1 + kMaxDegree + 3 + 2;
// standardised state is winsorised here so sparse tails do not drive the fit
constexpr double kStateClip = 3.0;

// Per-step state features, with the normalisation frozen at fit time. The
// conditional expectations are regressed as ratios to U'(x) (the "scale"),
// which makes the exponential case exactly representable by the constant.
struct StateBasis {
  double mean = 0.0;
  double scale = 1.0;
  double log_du_mean = 0.0;
  int degree = 0;
  bool count = false;
  bool brownian = false;
  double sqrt_t = 1.0;

  std::size_t size() const {
    return 1 + static_cast<std::size_t>(degree) + (count ? 3 : 0) + (brownian ? 2 : 0);
  }

  double marginal_scale(const UtilityFunction& U, double x) const {
    return std::exp(std::clamp(U.log_du(x) - log_du_mean, -30.0, 30.0));
  }

  void eval(double x, long n, double w, double* out) const {
    out[0] = 1.0;
    const double xt = std::clamp((x - mean) / scale, -kStateClip, kStateClip);
    double pw = 1.0;
    std::size_t k = 1;
    for (int d = 0; d < degree; ++d) {
      pw *= xt;
      out[k++] = pw;
    }
    if (count) {
      out[k++] = n == 1 ? 1.0 : 0.0;
      out[k++] = n == 2 ? 1.0 : 0.0;
      out[k++] = n >= 3 ? 1.0 : 0.0;
    }
    if (brownian) {
      const double wt = w / sqrt_t;
      out[k++] = wt;
      out[k++] = wt * wt - 1.0;
    }
  }
};

struct StepPolicy {
  StateBasis basis;
  std::vector<double> coef;  // empty means pi = 0
  // range of the fitted updates; the projection is not trusted outside it
  double lo = 0.0;
  double hi = 0.0;

  double operator()(double x, long n, double w) const {
    if (coef.empty()) return 0.0;
    std::array<double, kMaxFeatures> phi{};
    basis.eval(x, n, w, phi.data());
    double v = 0.0;
    for (std::size_t j = 0; j < coef.size(); ++j) v += coef[j] * phi[j];
    return std::isfinite(v) ? std::clamp(v, lo, hi) : 0.5 * (lo + hi);
  }
};

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) s += a[j] * b[j];
  return s;
}

struct ChunkTally {
  double res_sup = 0.0;
  double res_sq = 0.0;
  double change_sup = 0.0;
  std::size_t clamps = 0;
  std::size_t root_failures = 0;
};

}  // namespace

PicardResult picard_solve_coupled(const MarketCoefficients& coeffs, const UtilityFunction& U,
                                  const Liability& H, const TimeGrid& grid,
                                  const PicardOptions& opt) {
  if (opt.n_paths < 16) throw ConfigError(fmt::format("picard: n_paths must be at least 16 (got {})", opt.n_paths));
  if (opt.regression_degree < 0 || opt.regression_degree > kMaxDegree) {
    throw ConfigError(fmt::format("picard: regression_degree must lie in [0, {}] (got {})", kMaxDegree,
                                  opt.regression_degree));
  }
  if (!(opt.damping > 0.0 && opt.damping <= 1.0)) {
    throw ConfigError(fmt::format("picard: damping must lie in (0, 1] (got {})", opt.damping));
  }
  if (!(opt.root_tol > 0.0) || !(opt.policy_tol >= 0.0)) {
    throw ConfigError("picard: tolerances must be positive");
  }
  const bool diffusive = coeffs.mode == MarketMode::diffusive;

  const PathBundle paths = simulate_paths(coeffs, grid, opt.n_paths, opt.seed);
  const StepCoefficients sc(coeffs, grid);
  const std::size_t n = opt.n_paths;
  const std::size_t M = grid.M;
  const double dt = grid.dt();
  const double nu = coeffs.nu;

  std::vector<double> h(n);
  for (std::size_t p = 0; p < n; ++p) h[p] = H.at(paths, p);

  // cumulative N and W at the grid points, path-major
  std::vector<long> Ncum(n * (M + 1), 0);
  std::vector<double> Wcum(n * (M + 1), 0.0);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t i = 0; i < M; ++i) {
      Ncum[p * (M + 1) + i + 1] = Ncum[p * (M + 1) + i] + paths.dcount(p, i);
      Wcum[p * (M + 1) + i + 1] = Wcum[p * (M + 1) + i] + paths.dw(p, i);
    }
  }

  std::vector<StepPolicy> policy(M);
  PicardResult result;

  auto make_strategy = [&](std::size_t k) {
    return Strategy(fmt::format("picard_{}", k), [&](const StrategyState& s) {
      return policy[s.step](s.x, s.n, s.w);
    });
  };

  // One forward simulation plus backward regression sweep. With update set,
  // the policy is replaced by the projected strategy update.
  auto sweep = [&](std::size_t k, bool update, bool keep) {
    WealthPath wealth = integrate_wealth(paths, coeffs, make_strategy(k), opt.x0);

    PicardIteration diag;
    diag.iteration = k;
    diag.evaluation_only = !update;

    AdjointProcess adj;
    BsdeSolution sol;
    if (keep) {
      adj.n_paths = n;
      adj.M = M;
      adj.alpha.assign(n * (M + 1), 0.0);
      adj.beta.assign(n * M, 0.0);
      adj.gamma.assign(n * M, 0.0);
      sol.scheme = "picard_lsmc";
      sol.grid = grid;
      sol.n_states = n;
      sol.Y.assign((M + 1) * n, 0.0);
      sol.Z.assign(M * n, 0.0);
      sol.Psi.assign(M * n, 0.0);
      sol.H = h;
    }

    std::vector<double> target(n);
    for (std::size_t p = 0; p < n; ++p) {
      const double xT = wealth.terminal(p) + h[p];
      target[p] = U.du(xT);
      if (keep) {
        adj.alpha[p * (M + 1) + M] = target[p];
        sol.Y[M * n + p] = h[p];
      }
    }

    std::vector<StepPolicy> next_policy(M);
    std::vector<double> fitted(n), pi_new(n), ratio(n), weight(n), design;
    std::vector<ChunkTally> tallies(chunk_count(n));
    double noise = 0.0;

    for (std::size_t i = M; i-- > 0;) {
      const double t = grid.t(i);
      const double mu = sc.mu[i];
      const double sigma = sc.sigma[i];
      const double eta = sc.eta[i];
      const bool use_dn = eta != 0.0 || H.uses_count();
      const bool use_dw = sigma != 0.0 || H.uses_brownian();

      const auto st = chunked_stats(n, 1, [&](std::size_t p, std::vector<RunningStats>& acc) {
        acc[0].add(wealth.x(p, i));
      });
      StateBasis basis;
      basis.mean = st[0].mean;
      const double sd = std::sqrt(st[0].variance());
      basis.scale = sd > 1e-12 * (1.0 + std::abs(basis.mean)) ? sd : 1.0;
      basis.log_du_mean = U.log_du(basis.mean);
      basis.count = H.uses_count();
      basis.brownian = H.uses_brownian();
      basis.sqrt_t = t > 0.0 ? std::sqrt(t) : 1.0;

      // Second-order increment terms absorb the curvature of the target in dW
      // and dN so it does not leak into the state polynomials. The multi-jump
      // indicator is left uncentred: it is supported on a handful of paths and
      // centring would couple its (poorly determined) coefficients to alpha.
      const std::size_t blocks = 1 + (use_dn ? 2 : 0) + (use_dw ? 2 : 0);
      parallel_chunks(n, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t p = begin; p < end; ++p) {
          weight[p] = basis.marginal_scale(U, wealth.x(p, i));
          ratio[p] = target[p] / weight[p];
        }
      });
      LeastSquaresFit fit;
      std::size_t q = 0;
      for (int deg = opt.regression_degree; deg >= 0; --deg) {
        basis.degree = deg;
        q = basis.size();
        const std::size_t cols = q * blocks;
        design.assign(n * cols, 0.0);
        parallel_chunks(n, [&](std::size_t, std::size_t begin, std::size_t end) {
          std::array<double, kMaxFeatures> phi{};
          for (std::size_t p = begin; p < end; ++p) {
            basis.eval(wealth.x(p, i), Ncum[p * (M + 1) + i], Wcum[p * (M + 1) + i], phi.data());
            double* row = design.data() + p * cols;
            std::size_t off = 0;
            for (std::size_t j = 0; j < q; ++j) row[off + j] = phi[j];
            off += q;
            if (use_dn) {
              const double dn = paths.dn(p, i);
              const double multi = paths.dcount(p, i) >= 2 ? 1.0 : 0.0;
              for (std::size_t j = 0; j < q; ++j) row[off + j] = phi[j] * dn;
              off += q;
              for (std::size_t j = 0; j < q; ++j) row[off + j] = phi[j] * multi;
              off += q;
            }
            if (use_dw) {
              const double dw = paths.dw(p, i);
              const double h2 = dw * dw - dt;
              for (std::size_t j = 0; j < q; ++j) row[off + j] = phi[j] * dw;
              off += q;
              for (std::size_t j = 0; j < q; ++j) row[off + j] = phi[j] * h2;
            }
          }
        });
        fit = least_squares(design, n, cols, ratio, deg == 0);
        if (fit.full_rank) break;
        ++diag.rank_warnings;
      }

      const double* c_alpha = fit.coef.data();
      const double* c_gamma = use_dn ? fit.coef.data() + q : nullptr;
      const double* c_beta = use_dw ? fit.coef.data() + q * (use_dn ? 3 : 1) : nullptr;

      const double target_scale = ordered_sum(n, [&](std::size_t p) { return std::abs(target[p]); }) /
                                  static_cast<double>(n);
      const double floor = 1e-8 * target_scale;

      std::fill(tallies.begin(), tallies.end(), ChunkTally{});
      parallel_chunks(n, [&](std::size_t c, std::size_t begin, std::size_t end) {
        ChunkTally& tally = tallies[c];
        std::array<double, kMaxFeatures> phi{};
        for (std::size_t p = begin; p < end; ++p) {
          const double x = wealth.x(p, i);
          const double pi_k = wealth.pi[p * M + i];
          basis.eval(x, Ncum[p * (M + 1) + i], Wcum[p * (M + 1) + i], phi.data());
          const double w = weight[p];
          double a = w * dot(c_alpha, phi.data(), q);
          const double g = c_gamma ? w * dot(c_gamma, phi.data(), q) : 0.0;
          const double b = c_beta ? w * dot(c_beta, phi.data(), q) : 0.0;
          if (!(a > floor)) {
            a = floor;
            ++tally.clamps;
          }
          const double y = U.inv_du(a) - x;
          const double s = x + y;
          const double d2 = -U.ara(s) * a;
          const double z = b / d2 - pi_k * sigma;
          double psi = 0.0;
          if (use_dn) {
            double a2 = a + g;
            if (!(a2 > floor)) {
              a2 = floor;
              ++tally.clamps;
            }
            psi = U.inv_du(a2) - s - pi_k * eta;
          }
          const double r = (a * mu + b * sigma + g * eta * nu) / a;
          tally.res_sup = std::max(tally.res_sup, std::abs(r));
          tally.res_sq += r * r;

          fitted[p] = a;
          if (keep) {
            adj.alpha[p * (M + 1) + i] = a;
            adj.beta[p * M + i] = b;
            adj.gamma[p * M + i] = g;
            sol.Y[i * n + p] = y;
            sol.Z[i * n + p] = z;
            sol.Psi[i * n + p] = psi;
          }
          if (update) {
            double u = 0.0;
            if (diffusive) {
              const GSolution gs = solve_G(StateTuple{x, y, z, psi, eta, mu, sigma}, nu, U, opt.root_tol);
              if (!gs.converged) ++tally.root_failures;
              u = gs.pi;
            } else {
              u = pure_jump_strategy(x, y, psi, mu, eta, nu, U);
            }
            if (!std::isfinite(u)) {
              ++tally.root_failures;
              u = pi_k;
            }
            pi_new[p] = (1.0 - opt.damping) * pi_k + opt.damping * u;
          }
        }
      });
      for (const auto& tally : tallies) {
        diag.residual_sup = std::max(diag.residual_sup, tally.res_sup);
        diag.residual_rms += tally.res_sq;
        diag.clamps += tally.clamps;
        diag.root_failures += tally.root_failures;
      }

      // residual spread of the ratio regression, in units of the mean ratio
      const double mean_ratio = ordered_sum(n, [&](std::size_t p) { return std::abs(ratio[p]); }) /
                                static_cast<double>(n);
      const double spread = std::sqrt(fit.rss / static_cast<double>(n));
      noise = std::max(noise, spread / (mean_ratio * std::sqrt(static_cast<double>(n) * dt)) *
                                  (std::abs(sigma) + std::abs(eta) * std::sqrt(nu)));

      if (update) {
        design.assign(n * q, 0.0);
        parallel_chunks(n, [&](std::size_t, std::size_t begin, std::size_t end) {
          for (std::size_t p = begin; p < end; ++p) {
            basis.eval(wealth.x(p, i), Ncum[p * (M + 1) + i], Wcum[p * (M + 1) + i], design.data() + p * q);
          }
        });
        const LeastSquaresFit proj = least_squares(design, n, q, pi_new, true);
        const auto [lo, hi] = std::minmax_element(pi_new.begin(), pi_new.end());
        StepPolicy& next = next_policy[i];
        next.basis = basis;
        next.coef = proj.coef;
        next.lo = *lo;
        next.hi = *hi;
        std::vector<double> change(chunk_count(n), 0.0);
        parallel_chunks(n, [&](std::size_t c, std::size_t begin, std::size_t end) {
          double m = 0.0;
          for (std::size_t p = begin; p < end; ++p) {
            const double v = std::clamp(dot(proj.coef.data(), design.data() + p * q, q), next.lo, next.hi);
            m = std::max(m, std::abs(v - wealth.pi[p * M + i]));
          }
          change[c] = m;
        });
        for (double v : change) diag.policy_change_sup = std::max(diag.policy_change_sup, v);
      }
      target.swap(fitted);
      fitted.assign(n, 0.0);
    }

    diag.residual_rms = std::sqrt(diag.residual_rms / static_cast<double>(n * M));
    diag.noise = noise;
    if (update) policy = std::move(next_policy);
    if (keep) {
      result.wealth = std::move(wealth);
      result.adjoint = std::move(adj);
      result.solution = std::move(sol);
    }
    return diag;
  };

  std::size_t rises = 0;
  for (std::size_t k = 0; k < opt.n_iter; ++k) {
    const PicardIteration d = sweep(k, true, false);
    if (!result.history.empty() && d.residual_sup > result.history.back().residual_sup) {
      if (++rises >= 3 && !result.non_convergence) {
        result.non_convergence = true;
        result.warnings.push_back(fmt::format("residual increased over 3 consecutive iterations (iteration {})", k));
      }
    } else {
      rises = 0;
    }
    if (d.rank_warnings > 0) {
      result.warnings.push_back(fmt::format("iteration {}: regression degree reduced {} time(s) for rank deficiency",
                                            k, d.rank_warnings));
    }
    result.history.push_back(d);
    if (d.policy_change_sup <= opt.policy_tol) {
      result.converged = true;
      break;
    }
  }
  result.history.push_back(sweep(result.history.size(), false, true));

  const auto& last = result.history.back();
  result.solution.info = {{"iterations", static_cast<double>(result.history.size() - 1)},
                          {"converged", result.converged ? 1.0 : 0.0},
                          {"non_convergence", result.non_convergence ? 1.0 : 0.0},
                          {"residual_sup", last.residual_sup},
                          {"residual_rms", last.residual_rms},
                          {"noise", last.noise},
                          {"n_paths", static_cast<double>(n)},
                          {"seed", static_cast<double>(opt.seed)},
                          {"regression_degree", static_cast<double>(opt.regression_degree)},
                          {"damping", opt.damping}};
  return result;
}

}  // namespace jumpfbsde
