#pragma once

#include <cstdint>
#include <exception>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "jumpfbsde/config.hpp"
#include "jumpfbsde/market.hpp"

namespace jumpfbsde {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitVerification = 4;

/// Environment variable naming the default output directory.
inline constexpr const char* kOutDirEnv = "JUMPFBSDE_OUT_DIR";

struct RunOptions {
  std::string subcommand;  ///< simulate | solve-bsde | optimal-strategy | verify | report
  std::string config_path;
  std::string out_dir;     ///< empty: $JUMPFBSDE_OUT_DIR, else "out"
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
};

/// 2 for configuration/domain errors, 3 for numerical-range errors,
/// 4 for verification failures, 1 otherwise.
int exit_code_for(const std::exception& e);

/// Runs one subcommand end to end and returns the process exit code. Errors
/// are reported on err; progress lines go to log.
int run(const RunOptions& options, std::ostream& log, std::ostream& err);

/// Optimal strategy implied by the closed forms for this configuration:
/// exponential utility (either mode; lattice Psi when H depends on N_T) or
/// a mixture in a pure-jump market with H = 0. Throws ConfigError otherwise.
Strategy closed_form_strategy(const ExperimentConfig& cfg);

/// Runs the configured verification checks; "pass" is the conjunction.
nlohmann::json run_verification(const ExperimentConfig& cfg);

}  // namespace jumpfbsde
