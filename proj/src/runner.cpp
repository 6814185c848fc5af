#include "jumpfbsde/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <memory>

#include <fmt/format.h>

#include "jumpfbsde/bsde.hpp"
#include "jumpfbsde/errors.hpp"
#include "jumpfbsde/io.hpp"
#include "jumpfbsde/optimality.hpp"
#include "jumpfbsde/parallel.hpp"
#include "jumpfbsde/picard.hpp"
#include "jumpfbsde/stats.hpp"
#include "jumpfbsde/verify.hpp"
#include "jumpfbsde/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace jumpfbsde {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

bool is_exponential(const ExperimentConfig& cfg) {
  return cfg.utility.family() == UtilityFunction::Family::exponential;
}

bool pure_jump(const ExperimentConfig& cfg) { return cfg.market.mode == MarketMode::pure_jump; }

bool zero_liability(const ExperimentConfig& cfg) {
  return cfg.liability.is_constant() && cfg.liability(0, 0.0) == 0.0;
}

McSetup mc_setup(const ExperimentConfig& cfg) {
  return McSetup{cfg.market, cfg.grid, cfg.mc.n_paths, cfg.mc.seed, cfg.mc.x0};
}

BsdeSolution lattice_for(const ExperimentConfig& cfg) {
  const Liability H = cfg.liability;
  return lattice_backward_induction(cfg.market, cfg.utility.delta(), [H](long n) { return H(n, 0.0); }, cfg.grid,
                                    cfg.solver.tail_eps);
}

// Table of per-step pure-investment ratios (a - mu/eta)/(mu - eta nu) with canonical a.
std::vector<double> pure_investment_ratios(const ExperimentConfig& cfg) {
  const StepCoefficients sc(cfg.market, cfg.grid);
  std::vector<double> ratio(cfg.grid.M);
  for (std::size_t i = 0; i < cfg.grid.M; ++i) {
    const double a = canonical_a(sc.mu[i], sc.eta[i], sc.nu);
    const double denom = sc.mu[i] - sc.eta[i] * sc.nu;
    if (denom == 0.0) throw DomainError(fmt::format("mu - eta nu = 0 at step {}", i));
    ratio[i] = (a - sc.mu[i] / sc.eta[i]) / denom;
  }
  return ratio;
}

struct Check {
  json doc;
  bool pass = true;
};

json estimate_json(const std::string& name, double est, double se, double band, bool pass, const McSetup& mc) {
  return json{{"name", name}, {"estimate", est}, {"se", se}, {"band", band}, {"pass", pass},
              {"seed", mc.seed}, {"n_paths", mc.n_paths}};
}

json skipped(const std::string& name, const std::string& why) {
  return json{{"name", name}, {"skipped", true}, {"reason", why}, {"pass", true}};
}

}  // namespace

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const DomainError*>(&e)) return kExitConfig;
  if (dynamic_cast<const NumericalRangeError*>(&e)) return kExitNumerical;
  if (dynamic_cast<const VerificationFailure*>(&e)) return kExitVerification;
  return 1;
}

Strategy closed_form_strategy(const ExperimentConfig& cfg) {
  const StepCoefficients sc(cfg.market, cfg.grid);
  const std::size_t M = cfg.grid.M;
  if (is_exponential(cfg)) {
    const double delta = cfg.utility.delta();
    if (pure_jump(cfg)) {
      if (cfg.liability.is_constant()) {
        auto pi = std::make_shared<std::vector<double>>(M);
        for (std::size_t i = 0; i < M; ++i) {
          (*pi)[i] = exponential_pure_jump_strategy(0.0, sc.mu[i], sc.eta[i], sc.nu, delta);
        }
        return Strategy("exponential_pure_jump", [pi](const StrategyState& s) { return (*pi)[s.step]; });
      }
      if (cfg.liability.uses_brownian()) throw ConfigError("no closed form for a W-dependent liability; use solver.tier=picard");
      const auto lat = std::make_shared<BsdeSolution>(lattice_for(cfg));
      auto table = std::make_shared<std::vector<double>>(M * lat->n_states);
      for (std::size_t i = 0; i < M; ++i) {
        for (std::size_t n = 0; n < lat->n_states; ++n) {
          (*table)[i * lat->n_states + n] =
              exponential_pure_jump_strategy(lat->psi(i, n), sc.mu[i], sc.eta[i], sc.nu, delta);
        }
      }
      const std::size_t S = lat->n_states;
      return Strategy("exponential_pure_jump_lattice", [table, S](const StrategyState& s) {
        const auto n = std::min<std::size_t>(static_cast<std::size_t>(std::max(s.n, 0L)), S - 1);
        return (*table)[s.step * S + n];
      });
    }
    if (!cfg.liability.is_constant()) {
      throw ConfigError("no closed form for a diffusive market with a state-dependent liability; use solver.tier=picard");
    }
    // exponential F scales with U'(x+y), so the root does not depend on wealth
    auto pi = std::make_shared<std::vector<double>>(M);
    for (std::size_t i = 0; i < M; ++i) {
      const StateTuple w{0.0, 0.0, 0.0, 0.0, sc.eta[i], sc.mu[i], sc.sigma[i]};
      const GSolution g = solve_G(w, sc.nu, cfg.utility, cfg.solver.tol);
      (*pi)[i] = g.pi;
    }
    return Strategy("exponential_diffusive", [pi](const StrategyState& s) { return (*pi)[s.step]; });
  }
  if (pure_jump(cfg) && zero_liability(cfg)) {
    auto ratio = std::make_shared<std::vector<double>>(pure_investment_ratios(cfg));
    const UtilityFunction U = cfg.utility;
    return Strategy("pure_investment", [ratio, U](const StrategyState& s) { return (*ratio)[s.step] / U.ara(s.x); });
  }
  throw ConfigError("no closed-form optimum for this utility/market/liability; use solver.tier=picard");
}

// ------------------------------------------------------------ verification

json run_verification(const ExperimentConfig& cfg) {
  const McSetup mc = mc_setup(cfg);
  const double band = cfg.verify.band;
  const double T = cfg.grid.T;
  const Strategy pi_star = closed_form_strategy(cfg);
  const Strategy one = Strategy::constant(1.0);
  const Strategy step = Strategy::step_before(T / 2.0, 1.0);
  const UtilityFunction& U = cfg.utility;
  const Liability& H = cfg.liability;

  json checks = json::array();
  bool all = true;
  auto add = [&](json c) {
    all = all && c.value("pass", false);
    checks.push_back(std::move(c));
  };

  for (const auto& name : cfg.verify.checks) {
    const auto t0 = Clock::now();
    if (name == "gateaux") {
      for (const auto* h : {&one, &step}) {
        const auto g = gateaux_derivative(pi_star, *h, U, H, mc);
        auto c = estimate_json("gateaux[" + h->label() + "]", g.mean, g.std_error, band,
                               std::abs(g.mean) <= band * g.std_error, mc);
        c["excluded"] = g.excluded;
        add(c);
      }
      const auto neg = gateaux_derivative(pi_star.plus(0.2, one), one, U, H, mc);
      auto c = estimate_json("gateaux_negative_control[+0.2]", neg.mean, neg.std_error, band,
                             std::abs(neg.mean) > band * neg.std_error, mc);
      c["expect"] = "outside band";
      add(c);
    } else if (name == "utility_gap") {
      for (double eps : {-0.2, -0.1, 0.1, 0.2}) {
        const auto g = utility_gap(pi_star.plus(eps, one), pi_star, U, H, mc);
        add(estimate_json(fmt::format("utility_gap[eps={}]", eps), g.mean, g.std_error, band,
                          g.mean + band * g.std_error < 0.0, mc));
      }
      std::vector<double> eps;
      for (int k = -4; k <= 4; ++k) eps.push_back(0.05 * k);
      const auto scan = epsilon_scan(pi_star, one, eps, U, H, mc);
      json c{{"name", "epsilon_scan"}, {"eps", scan.eps}, {"expected_utility", scan.expected_utility},
             {"gap", scan.gap}, {"gap_se", scan.gap_se}, {"argmax_eps", scan.argmax_eps()},
             {"pass", scan.argmax_eps() == 0.0}, {"seed", mc.seed}, {"n_paths", mc.n_paths}};
      add(c);
    } else if (name == "martingale") {
      if (!pure_jump(cfg)) {
        add(skipped(name, "requires a pure_jump market"));
        continue;
      }
      const auto steps = checkpoint_steps(cfg.grid, cfg.verify.checkpoints);
      std::vector<double> times;
      for (auto i : steps) times.push_back(cfg.grid.t(i));
      const auto dol = martingale_diagnostic(times, doleans_exponential(mc, steps), 1.0);
      add(json{{"name", "doleans_exponential"}, {"times", dol.times}, {"means", dol.means},
               {"se", dol.std_errors}, {"max_std_deviation", dol.max_std_deviation}, {"band", band},
               {"pass", dol.max_std_deviation <= band}, {"seed", mc.seed}, {"n_paths", mc.n_paths}});
      if (zero_liability(cfg)) {
        const auto pim = martingale_diagnostic(times, pure_investment_marginal(mc, U, steps));
        add(json{{"name", "pure_investment_marginal"}, {"times", pim.times}, {"means", pim.means},
                 {"se", pim.std_errors}, {"max_std_deviation", pim.max_std_deviation}, {"band", band},
                 {"pass", pim.max_std_deviation <= band}, {"seed", mc.seed}, {"n_paths", mc.n_paths}});
      }
    } else if (name == "jump_identity") {
      if (!pure_jump(cfg) || !is_exponential(cfg) || !cfg.market.mu.is_constant() || !cfg.market.eta.is_constant()) {
        add(skipped(name, "requires exponential utility and a constant-coefficient pure_jump market"));
        continue;
      }
      const auto r = jump_identity_check(cfg.market, U, T, std::min<std::size_t>(mc.n_paths, 10000), mc.seed, mc.x0);
      add(json{{"name", name}, {"n_jumps", r.n_jumps}, {"max_ratio_error", r.max_ratio_error},
               {"max_drift_error", r.max_drift_error}, {"tolerance", 1e-12},
               {"pass", r.max_ratio_error <= 1e-12}});
    } else if (name == "q_measure") {
      const std::vector<Strategy> tests{pi_star.plus(1.0, one), pi_star.plus(1.0, step)};
      const auto res = q_measure_drift_check(pi_star, tests, U, H, mc);
      for (const auto& d : res) {
        auto c = estimate_json("q_drift[" + d.strategy + "]", d.weighted_mean, d.weighted_se, band,
                               std::abs(d.weighted_mean) <= band * d.weighted_se, mc);
        c["ess"] = d.ess;
        add(c);
      }
      auto c = estimate_json("q_drift_unweighted_control[" + res.front().strategy + "]", res.front().unweighted_mean,
                             res.front().unweighted_se, band,
                             std::abs(res.front().unweighted_mean) > band * res.front().unweighted_se, mc);
      c["expect"] = "outside band";
      add(c);
    } else if (name == "hypotheses") {
      const auto xi = terminal_values(pi_star, H, mc);
      const auto a = hypothesis_audit(U, xi);
      add(json{{"name", name}, {"h1", a.h1}, {"k", a.k}, {"sample_sizes", a.sample_sizes},
               {"second_moment", a.second_moment}, {"abs_utility", a.abs_utility},
               {"max_relative_change", a.max_relative_change}, {"status", a.status}, {"note", a.note},
               {"pass", true}});
    }
    checks.back()["seconds"] = seconds_since(t0);
  }
  return json{{"checks", checks}, {"pass", all}, {"strategy", pi_star.label()}};
}

// ------------------------------------------------------------ subcommands

namespace {

struct Outcome {
  json diagnostics = json::object();
  std::vector<std::string> outputs;
  bool pass = true;
};

Outcome cmd_simulate(const ExperimentConfig& cfg, const fs::path& out) {
  Outcome o;
  const PathBundle paths = simulate_paths(cfg.market, cfg.grid, cfg.mc.n_paths, cfg.mc.seed);
  Strategy strategy = Strategy::constant(0.0);
  try {
    strategy = closed_form_strategy(cfg);
  } catch (const ConfigError&) {
    o.diagnostics["strategy_note"] = "no closed-form optimum; wealth uses pi = 0";
  }
  const WealthPath wealth = integrate_wealth(paths, cfg.market, strategy, cfg.mc.x0);
  const std::size_t M = cfg.grid.M;
  const std::size_t n_dump = cfg.mc.dump_paths == 0 ? paths.n_paths : std::min(cfg.mc.dump_paths, paths.n_paths);
  CsvWriter csv({"path", "step", "t", "dW", "dN", "X"});
  for (std::size_t p = 0; p < n_dump; ++p) {
    for (std::size_t i = 0; i <= M; ++i) {
      const double dw = i < M ? paths.dw(p, i) : 0.0;
      const double dn = i < M ? static_cast<double>(paths.dcount(p, i)) : 0.0;
      csv.row({static_cast<double>(p), static_cast<double>(i), cfg.grid.t(i), dw, dn, wealth.x(p, i)});
    }
  }
  csv.save(out / "paths.csv");
  o.outputs.push_back("paths.csv");

  const auto st = chunked_stats(paths.n_paths, 2, [&](std::size_t p, std::vector<RunningStats>& acc) {
    acc[0].add(static_cast<double>(paths.count(p, M)));
    acc[1].add(wealth.terminal(p));
  });
  o.diagnostics["strategy"] = strategy.label();
  o.diagnostics["mean_N_T"] = st[0].mean;
  o.diagnostics["se_N_T"] = st[0].std_error();
  o.diagnostics["mean_X_T"] = st[1].mean;
  o.diagnostics["se_X_T"] = st[1].std_error();
  o.diagnostics["paths_written"] = n_dump;
  return o;
}

Outcome cmd_solve_bsde(const ExperimentConfig& cfg, const fs::path& out) {
  Outcome o;
  const std::string& tier = cfg.solver.tier;
  const std::size_t M = cfg.grid.M;
  const StepCoefficients sc(cfg.market, cfg.grid);
  json meta{{"scheme", tier}, {"grid", {{"T", cfg.grid.T}, {"M", M}}}};
  CsvWriter csv({"t", "state", "Y", "Z", "Psi", "pi"});
  const double nan = std::nan("");

  if (tier == "ode" || tier == "lattice") {
    if (!pure_jump(cfg) || !is_exponential(cfg)) {
      throw ConfigError(fmt::format("solver.tier={} requires market.mode=pure_jump and utility.family=exponential", tier));
    }
    const double delta = cfg.utility.delta();
    if (tier == "ode") {
      if (!cfg.liability.is_constant()) throw ConfigError("solver.tier=ode requires a constant liability");
      const auto Y = deterministic_Y(cfg.market, delta, cfg.liability(0, 0.0), cfg.grid);
      for (std::size_t i = 0; i <= M; ++i) {
        const double pi = i < M ? exponential_pure_jump_strategy(0.0, sc.mu[i], sc.eta[i], sc.nu, delta) : nan;
        csv.row({cfg.grid.t(i), 0.0, Y.Y[i], i < M ? 0.0 : nan, i < M ? 0.0 : nan, pi});
      }
      meta["Y_0"] = Y.y0();
    } else {
      const BsdeSolution sol = lattice_for(cfg);
      for (std::size_t i = 0; i <= M; ++i) {
        for (std::size_t n = 0; n < sol.n_states; ++n) {
          const bool step = i < M;
          const double psi = step ? sol.psi(i, n) : nan;
          const double pi = step ? exponential_pure_jump_strategy(psi, sc.mu[i], sc.eta[i], sc.nu, delta) : nan;
          csv.row({cfg.grid.t(i), static_cast<double>(n), sol.y(i, n), step ? 0.0 : nan, psi, pi});
        }
      }
      meta["Y_0"] = sol.y(0, 0);
      for (const auto& [k, v] : sol.info) meta["truncation"][k] = v;
    }
  } else {
    PicardOptions po;
    po.n_paths = cfg.mc.n_paths;
    po.seed = cfg.mc.seed;
    po.n_iter = cfg.solver.n_iter;
    po.regression_degree = cfg.solver.regression_degree;
    po.damping = cfg.solver.damping;
    po.x0 = cfg.mc.x0;
    po.root_tol = cfg.solver.tol;
    po.policy_tol = cfg.solver.policy_tol;
    const PicardResult r = picard_solve_coupled(cfg.market, cfg.utility, cfg.liability, cfg.grid, po);
    const std::size_t n_out = std::min(cfg.solver.export_paths, po.n_paths);
    const auto& s = r.solution;
    for (std::size_t p = 0; p < n_out; ++p) {
      for (std::size_t i = 0; i <= M; ++i) {
        const bool step = i < M;
        csv.row({cfg.grid.t(i), static_cast<double>(p), s.y(i, p), step ? s.z(i, p) : nan, step ? s.psi(i, p) : nan,
                 step ? r.wealth.pi[p * M + i] : nan});
      }
    }
    RunningStats y0;
    for (std::size_t p = 0; p < po.n_paths; ++p) y0.add(s.y(0, p));
    meta["Y_0"] = y0.mean;
    json hist = json::array();
    for (const auto& h : r.history) {
      hist.push_back({{"iteration", h.iteration}, {"residual_sup", h.residual_sup}, {"residual_rms", h.residual_rms},
                      {"policy_change_sup", h.policy_change_sup}, {"noise", h.noise},
                      {"rank_warnings", h.rank_warnings}, {"clamps", h.clamps},
                      {"root_failures", h.root_failures}, {"evaluation_only", h.evaluation_only}});
    }
    meta["history"] = hist;
    meta["converged"] = r.converged;
    meta["non_convergence"] = r.non_convergence;
    meta["warnings"] = r.warnings;
    meta["paths_written"] = n_out;
  }
  csv.save(out / "bsde.csv");
  write_json(out / "bsde.json", meta);
  o.outputs = {"bsde.csv", "bsde.json"};
  o.diagnostics["Y_0"] = meta["Y_0"];
  if (meta.contains("converged")) o.diagnostics["converged"] = meta["converged"];
  return o;
}

Outcome cmd_optimal_strategy(const ExperimentConfig& cfg, const fs::path& out) {
  Outcome o;
  const std::size_t M = cfg.grid.M;
  const StepCoefficients sc(cfg.market, cfg.grid);
  const UtilityFunction& U = cfg.utility;
  CsvWriter csv({"t", "state", "x", "pi", "residual"});
  double worst = 0.0;
  double limit = 1e-10;

  if (cfg.solver.tier == "picard") {
    PicardOptions po;
    po.n_paths = cfg.mc.n_paths;
    po.seed = cfg.mc.seed;
    po.n_iter = cfg.solver.n_iter;
    po.regression_degree = cfg.solver.regression_degree;
    po.damping = cfg.solver.damping;
    po.x0 = cfg.mc.x0;
    po.root_tol = cfg.solver.tol;
    po.policy_tol = cfg.solver.policy_tol;
    const PicardResult r = picard_solve_coupled(cfg.market, U, cfg.liability, cfg.grid, po);
    const std::size_t n_out = std::min(cfg.solver.export_paths, po.n_paths);
    for (std::size_t p = 0; p < n_out; ++p) {
      for (std::size_t i = 0; i < M; ++i) {
        const double a = r.adjoint.a(p, i);
        const double res = (a * sc.mu[i] + r.adjoint.b(p, i) * sc.sigma[i] + r.adjoint.g(p, i) * sc.eta[i] * sc.nu) / a;
        csv.row({cfg.grid.t(i), static_cast<double>(p), r.wealth.x(p, i), r.wealth.pi[p * M + i], res});
      }
    }
    worst = r.last().residual_sup;
    limit = std::max(10.0 * r.last().noise, 1e-3);
    o.diagnostics["first_residual_sup"] = r.first().residual_sup;
    o.diagnostics["noise"] = r.last().noise;
    o.diagnostics["converged"] = r.converged;
    o.diagnostics["non_convergence"] = r.non_convergence;
  } else {
    const Strategy pi = closed_form_strategy(cfg);
    if (pure_jump(cfg) && is_exponential(cfg) && !cfg.liability.is_constant()) {
      const BsdeSolution lat = lattice_for(cfg);
      for (std::size_t i = 0; i < M; ++i) {
        for (std::size_t n = 0; n < lat.n_states; ++n) {
          StrategyState s;
          s.step = i;
          s.t = cfg.grid.t(i);
          s.n = static_cast<long>(n);
          s.x = cfg.mc.x0;
          const double v = pi(s);
          const double res = pure_jump_foc_residual(0.0, 0.0, lat.psi(i, n), v, sc.mu[i], sc.eta[i], sc.nu, U);
          worst = std::max(worst, std::abs(res));
          csv.row({s.t, static_cast<double>(n), s.x, v, res});
        }
      }
    } else {
      // wealth grid around x0; exponential strategies do not depend on it
      std::vector<double> xs;
      for (int k = -4; k <= 4; ++k) xs.push_back(cfg.mc.x0 + 0.5 * k);
      const auto I = pure_jump(cfg) ? tail_integrals(cfg.grid, canonical_a_function(cfg.market)) : std::vector<double>();
      for (std::size_t i = 0; i < M; ++i) {
        for (std::size_t k = 0; k < xs.size(); ++k) {
          StrategyState s;
          s.step = i;
          s.t = cfg.grid.t(i);
          s.x = xs[k];
          const double v = pi(s);
          double res = 0.0;
          if (pure_jump(cfg)) {
            double y = 0.0, psi = 0.0;
            if (!is_exponential(cfg)) {
              // pure-investment Y and Psi at wealth x
              const double A = -I[i];
              const double m = jump_ratio(sc.mu[i], sc.eta[i], sc.nu);
              y = U.shift_marginal(s.x, A) - s.x;
              psi = -v * sc.eta[i] + U.shift_marginal(s.x, A + std::log1p(-m)) - (s.x + y);
            }
            // normalised by U'(x + y)
            res = pure_jump_foc_residual(s.x, y, psi, v, sc.mu[i], sc.eta[i], sc.nu, U) / U.du(s.x + y);
          } else {
            const StateTuple w{s.x, 0.0, 0.0, 0.0, sc.eta[i], sc.mu[i], sc.sigma[i]};
            res = residual_F(w, v, sc.nu, U) / U.du(s.x);
          }
          worst = std::max(worst, std::abs(res));
          csv.row({s.t, static_cast<double>(k), s.x, v, res});
        }
      }
    }
  }
  csv.save(out / "strategy.csv");
  o.outputs.push_back("strategy.csv");
  o.diagnostics["max_abs_residual"] = worst;
  o.diagnostics["residual_limit"] = limit;
  o.pass = worst <= limit;
  return o;
}

Outcome cmd_verify(const ExperimentConfig& cfg, const fs::path& out) {
  Outcome o;
  const json report = run_verification(cfg);
  write_json(out / "verify.json", report);
  o.outputs.push_back("verify.json");
  o.pass = report["pass"].get<bool>();
  json summary = json::array();
  for (const auto& c : report["checks"]) summary.push_back({{"name", c["name"]}, {"pass", c["pass"]}});
  o.diagnostics["checks"] = summary;
  return o;
}

int cmd_report(const fs::path& out, std::ostream& log) {
  if (!fs::exists(out)) throw ConfigError(fmt::format("output directory '{}' does not exist", out.string()));
  std::vector<fs::path> manifests;
  for (const auto& e : fs::directory_iterator(out)) {
    const auto name = e.path().filename().string();
    if (name.rfind("manifest_", 0) == 0 && e.path().extension() == ".json") manifests.push_back(e.path());
  }
  std::sort(manifests.begin(), manifests.end());
  if (manifests.empty()) throw ConfigError(fmt::format("no manifest_*.json in '{}'", out.string()));

  std::string text = fmt::format("jumpfbsde report for {}\n\n", out.string());
  bool all = true;
  for (const auto& path : manifests) {
    const json m = read_json(path);
    const bool hash_ok = m.contains("config") && config_hash(m["config"]) == m.value("config_hash", "");
    bool files_ok = true;
    for (const auto& f : m.value("outputs", json::array())) files_ok = files_ok && fs::exists(out / f.get<std::string>());
    const bool pass = m.value("pass", false) && hash_ok && files_ok;
    all = all && pass;
    text += fmt::format("{:<18} {}  hash {}  outputs {}  ({:.2f} s)\n", m.value("subcommand", "?"),
                        pass ? "PASS" : "FAIL", hash_ok ? "ok" : "MISMATCH", files_ok ? "ok" : "MISSING",
                        m.value("seconds", 0.0));
    if (m.contains("error")) text += fmt::format("    error: {}\n", m["error"].get<std::string>());
    if (m.contains("diagnostics")) {
      for (const auto& [k, v] : m["diagnostics"].items()) {
        if (k == "checks") {
          for (const auto& c : v) {
            text += fmt::format("    {:<44} {}\n", c["name"].get<std::string>(), c["pass"].get<bool>() ? "pass" : "FAIL");
          }
        } else {
          text += fmt::format("    {} = {}\n", k, v.dump());
        }
      }
    }
  }
  write_atomic(out / "report.txt", text);
  log << text;
  return all ? kExitOk : kExitVerification;
}

}  // namespace

int run(const RunOptions& options, std::ostream& log, std::ostream& err) {
  fs::path out = options.out_dir;
  if (out.empty()) {
    const char* env = std::getenv(kOutDirEnv);
    out = env && *env ? fs::path(env) : fs::path("out");
  }
  set_num_threads(std::max<std::size_t>(1, options.threads));

  if (options.subcommand == "report") {
    try {
      return cmd_report(out, log);
    } catch (const std::exception& e) {
      err << "error: " << e.what() << "\n";
      return exit_code_for(e);
    }
  }

  ExperimentConfig cfg;
  std::vector<std::string> overrides = options.overrides;
  if (options.seed) overrides.push_back(fmt::format("mc.seed={}", *options.seed));
  try {
    if (options.config_path.empty()) throw ConfigError("--config is required");
    cfg = load_config(options.config_path, overrides);
    fs::create_directories(out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }

  const auto t0 = Clock::now();
  json manifest{{"subcommand", options.subcommand},
                {"version", kVersion},
                {"config_path", options.config_path},
                {"config_hash", config_hash(cfg.resolved)},
                {"config", cfg.resolved},
                {"overrides", overrides},
                {"threads", options.threads}};
  int code = kExitOk;
  try {
    Outcome o;
    if (options.subcommand == "simulate") o = cmd_simulate(cfg, out);
    else if (options.subcommand == "solve-bsde") o = cmd_solve_bsde(cfg, out);
    else if (options.subcommand == "optimal-strategy") o = cmd_optimal_strategy(cfg, out);
    else if (options.subcommand == "verify") o = cmd_verify(cfg, out);
    else throw ConfigError(fmt::format("unknown subcommand '{}'", options.subcommand));
    manifest["outputs"] = o.outputs;
    manifest["diagnostics"] = o.diagnostics;
    manifest["pass"] = o.pass;
    code = o.pass ? kExitOk : kExitVerification;
    log << fmt::format("{}: {} ({} output(s) in {})\n", options.subcommand, o.pass ? "pass" : "FAIL", o.outputs.size(),
                       out.string());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    manifest["outputs"] = json::array();
    manifest["pass"] = false;
    manifest["error"] = e.what();
    code = exit_code_for(e);
  }
  manifest["seconds"] = seconds_since(t0);
  manifest["exit_code"] = code;
  try {
    write_json(out / fmt::format("manifest_{}.json", options.subcommand), manifest);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    if (code == kExitOk) code = exit_code_for(e);
  }
  return code;
}

}  // namespace jumpfbsde
