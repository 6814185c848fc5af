// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.
//
// Every Monte Carlo criterion also returns a fingerprint of its estimates; the
// determinism criterion reruns them with 2 and 8 worker threads and compares
// the fingerprints bit for bit.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "jumpfbsde/bsde.hpp"
#include "jumpfbsde/optimality.hpp"
#include "jumpfbsde/parallel.hpp"
#include "jumpfbsde/picard.hpp"
#include "jumpfbsde/verify.hpp"

using namespace jumpfbsde;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;
  std::vector<double> fingerprint;

  void require(bool ok, std::string note) {
    pass = pass && ok;
    notes.push_back((ok ? "" : "[x] ") + std::move(note));
  }
};

struct Criterion {
  int id;
  std::string title;
  double time_limit;  // seconds, <= 0 for none
  bool monte_carlo;
  std::function<Outcome()> run;
};

// reference market: m = mu/(eta nu) = 0.2, nu = 1, delta = 1, T = 1
constexpr double kMu = 0.1;
constexpr double kEta = 0.5;
constexpr double kNu = 1.0;
constexpr double kDelta = 1.0;

MarketCoefficients reference_market() { return MarketCoefficients::constant_pure_jump(kMu, kEta, kNu); }

double closed_form_pi() { return -std::log(1.0 - kMu / (kEta * kNu)) / (kDelta * kEta); }

McSetup reference_mc() {
  McSetup mc;
  mc.coeffs = reference_market();
  mc.grid = TimeGrid{1.0, 100};
  mc.n_paths = 100000;
  mc.seed = 7;
  mc.x0 = 1.0;
  return mc;
}

Strategy optimum() { return Strategy::constant(closed_form_pi()); }

std::string sci(double v) { return fmt::format("{:.3e}", v); }

// ---------------------------------------------------------------- 1
Outcome closed_form_strategy() {
  Outcome o;
  const double scalar = -(1.0 / (kDelta * kEta)) * std::log(1.0 - 0.2);
  const double pi = exponential_pure_jump_strategy(0.0, kMu, kEta, kNu, kDelta);
  const double pj = pure_jump_strategy(0.37, -0.12, 0.0, kMu, kEta, kNu, UtilityFunction::exponential(kDelta));
  const double rel_scalar = std::abs(pi - scalar) / scalar;
  o.require(rel_scalar <= 5e-13, fmt::format("exponential_pure_jump_strategy = {:.12f}, scalar {:.12f} (rel {})", pi,
                                             scalar, sci(rel_scalar)));
  o.require(std::abs(pi - 0.44628710) <= 5e-9, "matches 0.44628710 to 8 decimals");
  const double rel = std::abs(pj - pi) / pi;
  o.require(rel <= 1e-12, fmt::format("pure_jump_strategy rel diff {}", sci(rel)));
  return o;
}

// ---------------------------------------------------------------- 2
Outcome merton_root() {
  Outcome o;
  const StateTuple w{0.0, 0.0, 0.0, 0.0, 0.0, 0.05, 0.2};
  const auto g = solve_G(w, 1.0, UtilityFunction::exponential(2.0));
  o.require(std::abs(g.pi - 0.625) <= 1e-10, fmt::format("pi = {:.15f} (err {})", g.pi, sci(std::abs(g.pi - 0.625))));
  o.require(std::abs(g.residual) <= 1e-12, fmt::format("|F| = {}", sci(std::abs(g.residual))));
  return o;
}

// ---------------------------------------------------------------- 3
Outcome deterministic_oracle() {
  Outcome o;
  const auto c = reference_market();
  const double y0 = deterministic_Y(c, kDelta, 0.0, TimeGrid{1.0, 1000}).y0();
  o.require(std::abs(y0 - 0.02148516) <= 1e-8, fmt::format("deterministic Y(0) = {:.12f}", y0));

  // constant coefficients: the lattice reproduces the value up to rounding
  double worst_const = 0.0;
  for (std::size_t M : {100u, 200u, 400u, 800u}) {
    const double yl = lattice_backward_induction(c, kDelta, [](long) { return 0.0; }, TimeGrid{1.0, M}).y(0, 0);
    worst_const = std::max(worst_const, std::abs(yl - y0));
  }
  o.require(worst_const <= 1e-12, fmt::format("constant coefficients: max |lattice - ODE| = {}", sci(worst_const)));

  // the O(dt) rate is visible only when the driver varies in time
  auto tv = c;
  tv.mu = TimeFunction::affine(0.02, 0.16);
  tv.bounds.c1 = 0.0;
  tv.bounds.c2 = 0.5;
  std::vector<double> err;
  for (std::size_t M : {100u, 200u, 400u, 800u}) {
    const TimeGrid g{1.0, M};
    const double exact = deterministic_Y(tv, kDelta, 0.0, g).y0();
    err.push_back(std::abs(lattice_backward_induction(tv, kDelta, [](long) { return 0.0; }, g).y(0, 0) - exact));
  }
  double min_order = INFINITY;
  std::string orders;
  for (std::size_t k = 0; k + 1 < err.size(); ++k) {
    const double p = std::log2(err[k] / err[k + 1]);
    min_order = std::min(min_order, p);
    orders += fmt::format("{}{:.3f}", k ? ", " : "", p);
  }
  o.require(min_order >= 0.9, fmt::format("time-varying mu: errors {} .. {}, observed orders [{}]", sci(err.front()),
                                          sci(err.back()), orders));
  return o;
}

// ---------------------------------------------------------------- 4
Outcome driver_identity() {
  Outcome o;
  std::vector<double> z, psi;
  for (int k = 0; k < 50; ++k) {
    z.push_back(-1.0 + 2.0 * k / 49.0);
    psi.push_back(-1.0 + 2.0 * k / 49.0);
  }
  double worst = 0.0;
  for (double zz : z) {
    for (double pp : psi) {
      worst = std::max(worst, std::abs(exponential_driver(zz, pp, kMu, kEta, kNu, kDelta) +
                                       exponential_bsde_integrand(zz, pp, kMu, kEta, kNu, kDelta)));
    }
  }
  o.require(worst <= 1e-12, fmt::format("driver + integrand max |.| = {} on 50x50", sci(worst)));
  const auto r = check_driver_bounds(kMu, kEta, kNu, kDelta, z, psi);
  o.require(std::abs(r.lambda - 0.35702968) <= 5e-9, fmt::format("lambda = {:.8f}", r.lambda));
  o.require(std::abs(r.psi_star + 0.22314355) <= 5e-9, fmt::format("psi* = {:.8f}", r.psi_star));
  o.require(r.max_A1_violation <= 1e-10, fmt::format("A1 max violation {}", sci(r.max_A1_violation)));
  o.require(r.max_A2_violation == 0.0, fmt::format("A2 max violation {}", r.max_A2_violation));
  o.notes.push_back(fmt::format("upper gap f(0,psi*) - [psi*] = {:.8f}", r.upper_gap_at_psi_star));
  return o;
}

// ---------------------------------------------------------------- 5
Outcome first_order_condition() {
  Outcome o;
  const auto mc = reference_mc();
  const auto U = UtilityFunction::exponential(kDelta);
  for (const auto& h : {Strategy::constant(1.0), Strategy::step_before(0.5, 1.0)}) {
    const auto g = gateaux_derivative(optimum(), h, U, Liability::zero(), mc);
    o.require(std::abs(g.mean) <= 3.0 * g.std_error,
              fmt::format("h = {}: mean {} SE {} ({:.2f} SE)", h.label(), sci(g.mean), sci(g.std_error),
                          std::abs(g.mean) / g.std_error));
    o.fingerprint.insert(o.fingerprint.end(), {g.mean, g.std_error});
  }
  const auto neg =
      gateaux_derivative(optimum().plus(0.2, Strategy::constant(1.0)), Strategy::constant(1.0), U, Liability::zero(), mc);
  o.require(std::abs(neg.mean) > 3.0 * neg.std_error,
            fmt::format("control pi*+0.2: {:.1f} SE", std::abs(neg.mean) / neg.std_error));
  o.fingerprint.insert(o.fingerprint.end(), {neg.mean, neg.std_error});
  return o;
}

// ---------------------------------------------------------------- 6
Outcome utility_dominance() {
  Outcome o;
  const auto mc = reference_mc();
  const auto U = UtilityFunction::exponential(kDelta);
  for (double eps : {-0.2, -0.1, 0.1, 0.2}) {
    const auto g = utility_gap(optimum().plus(eps, Strategy::constant(1.0)), optimum(), U, Liability::zero(), mc);
    o.require(g.mean + 3.0 * g.std_error < 0.0,
              fmt::format("eps {:+.1f}: gap {} ({:.1f} SE)", eps, sci(g.mean), -g.mean / g.std_error));
    o.fingerprint.insert(o.fingerprint.end(), {g.mean, g.std_error});
  }
  std::vector<double> eps;
  for (int k = -4; k <= 4; ++k) eps.push_back(0.05 * k);
  const auto scan = epsilon_scan(optimum(), Strategy::constant(1.0), eps, U, Liability::zero(), mc);
  o.require(scan.argmax_eps() == 0.0, fmt::format("eps-scan argmax {}", scan.argmax_eps()));
  o.fingerprint.insert(o.fingerprint.end(), scan.expected_utility.begin(), scan.expected_utility.end());
  return o;
}

// ---------------------------------------------------------------- 7
Outcome martingales() {
  Outcome o;
  const auto mc = reference_mc();
  const auto steps = checkpoint_steps(mc.grid, 10);
  std::vector<double> t;
  for (auto i : steps) t.push_back(mc.grid.t(i));
  const auto dol = martingale_diagnostic(t, doleans_exponential(mc, steps), 1.0);
  o.require(dol.max_std_deviation <= 3.0 && t.size() == 11,
            fmt::format("Doleans exponential: max {:.2f} SE over {} checkpoints", dol.max_std_deviation, t.size() - 1));
  const auto pim = martingale_diagnostic(t, pure_investment_marginal(mc, UtilityFunction::exponential(kDelta), steps));
  o.require(pim.max_std_deviation <= 3.0, fmt::format("U'(X)e^A: max {:.2f} SE", pim.max_std_deviation));
  const auto jr = jump_identity_check(reference_market(), UtilityFunction::exponential(kDelta), 1.0, 10000, 7, 1.0);
  o.require(jr.max_ratio_error <= 1e-12 && jr.n_jumps > 0,
            fmt::format("jump ratio error {} over {} jumps", sci(jr.max_ratio_error), jr.n_jumps));
  o.fingerprint.insert(o.fingerprint.end(), dol.means.begin(), dol.means.end());
  o.fingerprint.insert(o.fingerprint.end(), pim.means.begin(), pim.means.end());
  o.fingerprint.push_back(jr.max_ratio_error);
  return o;
}

// ---------------------------------------------------------------- 8
Outcome q_measure() {
  Outcome o;
  const auto mc = reference_mc();
  const auto res = q_measure_drift_check(
      optimum(), {optimum().plus(1.0, Strategy::constant(1.0)), optimum().plus(1.0, Strategy::step_before(0.5, 1.0))},
      UtilityFunction::exponential(kDelta), Liability::zero(), mc);
  for (const auto& d : res) {
    o.require(std::abs(d.weighted_mean) <= 3.0 * d.weighted_se,
              fmt::format("{}: weighted {:.2f} SE", d.strategy, std::abs(d.weighted_mean) / d.weighted_se));
    o.fingerprint.insert(o.fingerprint.end(), {d.weighted_mean, d.weighted_se, d.unweighted_mean});
  }
  const auto& c = res.front();
  o.require(std::abs(c.unweighted_mean) > 3.0 * c.unweighted_se,
            fmt::format("unweighted control {:.1f} SE", std::abs(c.unweighted_mean) / c.unweighted_se));
  return o;
}

// ---------------------------------------------------------------- 9
void picard_case(Outcome& o, const std::string& name, const MarketCoefficients& c, const UtilityFunction& U,
                 double target) {
  PicardOptions opt;
  opt.n_paths = 50000;
  opt.seed = 7;
  opt.n_iter = 10;
  const auto r = picard_solve_coupled(c, U, Liability::zero(), TimeGrid{1.0, 100}, opt);
  double sup = 0.0;
  for (double p : r.wealth.pi) sup = std::max(sup, std::abs(p - target));
  const std::size_t iterations = r.history.size() - 1;
  o.require(sup <= 0.02 * target && iterations <= 10,
            fmt::format("{}: sup|pi - {:.8f}| = {} ({:.3f}%) after {} iteration(s)", name, target, sci(sup),
                        100.0 * sup / target, iterations));
  // history[0] runs under pi^0 = 0, history[1] under the first update
  const double first = r.history.at(0).residual_sup;
  const double second = r.history.at(1).residual_sup;
  const double last = r.last().residual_sup;
  o.require(second / last >= 10.0, fmt::format("{}: residual {} -> {} -> {} (x{:.0f} from the first update)", name,
                                               sci(first), sci(second), sci(last), second / last));
  o.fingerprint.insert(o.fingerprint.end(), {sup, last, r.solution.y(0, 0)});
}

Outcome picard_convergence() {
  Outcome o;
  picard_case(o, "pure jump", reference_market(), UtilityFunction::exponential(kDelta), closed_form_pi());
  picard_case(o, "diffusive", MarketCoefficients::constant_diffusive(0.05, 0.2, 0.0, 1.0),
              UtilityFunction::exponential(2.0), 0.05 / (2.0 * 0.2 * 0.2));
  return o;
}

// ---------------------------------------------------------------- 10
Outcome lattice_poisson_sum() {
  Outcome o;
  const auto c = MarketCoefficients::constant_pure_jump(0.0, kEta, kNu);
  const TimeGrid grid{1.0, 100};
  const double tail = 1e-12;
  auto H = [](long n) { return n >= 1 ? 1.0 : 0.0; };
  const auto lat = lattice_backward_induction(c, kDelta, H, grid, tail);
  // Direct evaluation: Y_i(n) = sum_k P(N_T - N_{t_i} = k) H(n + k), summed until
  // the remaining Poisson mass is below the tail tolerance.
  double worst = 0.0;
  for (std::size_t i = 0; i <= grid.M; ++i) {
    const double lam = kNu * (grid.T - grid.t(i));
    for (std::size_t n = 0; n < lat.n_states; ++n) {
      double term = std::exp(-lam), mass = 0.0, sum = 0.0;
      for (long k = 0; 1.0 - mass > tail && k < 200; ++k) {
        sum += term * H(static_cast<long>(n) + k);
        mass += term;
        term *= lam / static_cast<double>(k + 1);
      }
      worst = std::max(worst, std::abs(lat.y(i, n) - sum));
    }
  }
  o.require(worst <= 1e-8, fmt::format("max |lattice - Poisson sum| = {} over {} states", sci(worst),
                                       (grid.M + 1) * lat.n_states));
  return o;
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : "; ") + x;
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  bool skip_threads = false;
  for (int k = 1; k < argc; ++k) {
    if (std::strcmp(argv[k], "--skip-determinism") == 0) skip_threads = true;
  }

  const std::vector<Criterion> criteria = {
      {1, "closed-form strategy", 1e-3, false, closed_form_strategy},
      {2, "Merton-limit root", 1e-3, false, merton_root},
      {3, "deterministic BSDE oracle", 1.0, false, deterministic_oracle},
      {4, "driver identity and bounds", 1.0, false, driver_identity},
      {5, "first-order condition", 60.0, true, first_order_condition},
      {6, "utility dominance", 120.0, true, utility_dominance},
      {7, "martingale diagnostics", 0.0, true, martingales},
      {8, "Q-measure drift", 0.0, true, q_measure},
      {9, "Picard oracle convergence", 300.0, true, picard_convergence},
      {10, "lattice vs Poisson sum", 0.0, false, lattice_poisson_sum},
  };

  bool all = true;
  std::vector<std::pair<const Criterion*, std::vector<double>>> prints;
  set_num_threads(1);
  for (const auto& c : criteria) {
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    if (c.time_limit > 0.0) {
      o.require(secs < c.time_limit, fmt::format("runtime {:.4g} s < {:g} s", secs, c.time_limit));
    }
    all = all && o.pass;
    std::printf("criterion %2d %s  %s (%.3f s): %s\n", c.id, o.pass ? "PASS" : "FAIL", c.title.c_str(), secs,
                join(o.notes).c_str());
    std::fflush(stdout);
    if (c.monte_carlo) prints.emplace_back(&c, o.fingerprint);
  }

  if (skip_threads) {
    std::printf("criterion 11 SKIP  determinism across threads (--skip-determinism)\n");
  } else {
    Outcome o;
    const auto t0 = Clock::now();
    for (std::size_t threads : {2u, 8u}) {
      set_num_threads(threads);
      for (const auto& [c, ref] : prints) {
        std::vector<double> fp;
        try {
          fp = c->run().fingerprint;
        } catch (const std::exception& e) {
          o.require(false, fmt::format("criterion {} with {} threads threw: {}", c->id, threads, e.what()));
          continue;
        }
        const bool same = fp.size() == ref.size() &&
                          std::memcmp(fp.data(), ref.data(), fp.size() * sizeof(double)) == 0;
        o.require(same, fmt::format("criterion {} with {} threads {}", c->id, threads,
                                    same ? "bit-identical" : "DIFFERS"));
      }
    }
    set_num_threads(1);
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    all = all && o.pass;
    std::printf("criterion 11 %s  determinism across 1/2/8 threads (%.3f s): %s\n", o.pass ? "PASS" : "FAIL", secs,
                join(o.notes).c_str());
  }
  std::printf("acceptance: %s\n", all ? "PASS" : "FAIL");
  return all ? 0 : 1;
}
