#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "jumpfbsde/runner.hpp"
#include "jumpfbsde/version.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Utility-maximising portfolios in a jump-diffusion market: simulation, BSDE solvers and checks"};
  app.set_version_flag("--version", std::string(jumpfbsde::kVersion));

  jumpfbsde::RunOptions opt;
  std::uint64_t seed = 0;
  app.add_option("--config", opt.config_path, "experiment config (JSON)");
  app.add_option("--out", opt.out_dir, "output directory (default $JUMPFBSDE_OUT_DIR or ./out)");
  auto* seed_opt = app.add_option("--seed", seed, "override mc.seed");
  app.add_option("--threads", opt.threads, "worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
  app.add_option("--set", opt.overrides, "override a config value, key=value (repeatable)");
  app.require_subcommand(1, 1);
  const std::pair<const char*, const char*> subcommands[] = {
      {"simulate", "simulate wealth paths under the closed-form strategy"},
      {"solve-bsde", "solve the BSDE with the configured tier"},
      {"optimal-strategy", "tabulate pi* and its first-order residual"},
      {"verify", "run the Monte Carlo and identity checks"},
      {"report", "summarise the manifests in --out"},
  };
  for (const auto& [name, help] : subcommands) app.add_subcommand(name, help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : jumpfbsde::kExitConfig;
  }
  opt.subcommand = app.get_subcommands().front()->get_name();
  if (seed_opt->count() > 0) opt.seed = seed;
  return jumpfbsde::run(opt, std::cout, std::cerr);
}
