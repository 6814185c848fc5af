#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "jumpfbsde/liability.hpp"
#include "jumpfbsde/market.hpp"
#include "jumpfbsde/utility.hpp"

namespace jumpfbsde {

struct SolverSettings {
  std::string tier = "ode";  ///< ode | lattice | picard
  double tol = 1e-12;
  double policy_tol = 1e-4;
  int regression_degree = 3;
  std::size_t n_iter = 10;
  double damping = 1.0;
  double tail_eps = 1e-12;
  std::size_t export_paths = 100;
};

struct VerifySettings {
  std::vector<std::string> checks;
  double band = 3.0;
  std::size_t checkpoints = 10;
};

struct McSettings {
  std::size_t n_paths = 100000;
  std::uint64_t seed = 7;
  double x0 = 0.0;
  std::size_t dump_paths = 1000;  ///< paths written by `simulate` (0 = all)
};

struct ExperimentConfig {
  nlohmann::json resolved;  ///< the document after overrides, with defaults filled in
  MarketCoefficients market;
  UtilityFunction utility = UtilityFunction::exponential(1.0);
  Liability liability;
  TimeGrid grid;
  McSettings mc;
  SolverSettings solver;
  VerifySettings verify;
};

/// Every check name `verify` understands.
const std::vector<std::string>& known_checks();

/// Applies "a.b.c=value" overrides (value parsed as JSON, else taken as a
/// string). Unknown paths are rejected by the subsequent parse.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Validates and converts a document. Unknown keys, wrong types and parameter
/// domain violations raise ConfigError naming the key.
ExperimentConfig parse_config(const nlohmann::json& doc);

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides);

/// Hex SHA-256 of the canonical (sorted-key, compact) serialisation.
std::string config_hash(const nlohmann::json& doc);

}  // namespace jumpfbsde
