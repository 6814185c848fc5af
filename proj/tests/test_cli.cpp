#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "jumpfbsde/config.hpp"
#include "jumpfbsde/errors.hpp"
#include "jumpfbsde/io.hpp"
#include "jumpfbsde/runner.hpp"

using namespace jumpfbsde;
namespace fs = std::filesystem;

namespace {

const std::string kReference = std::string(JUMPFBSDE_CONFIG_DIR) + "/reference.json";

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("jumpfbsde_cli_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& sub, const fs::path& out, std::vector<std::string> overrides = {},
            std::string* err_text = nullptr, const std::string& config = kReference, std::size_t threads = 1) {
  RunOptions o;
  o.subcommand = sub;
  o.config_path = config;
  o.out_dir = out.string();
  o.overrides = std::move(overrides);
  o.threads = threads;
  std::ostringstream log, err;
  const int code = run(o, log, err);
  if (err_text) *err_text = err.str();
  return code;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("exit codes by error type") {
  CHECK(exit_code_for(ConfigError("x")) == kExitConfig);
  CHECK(exit_code_for(DomainError("x")) == kExitConfig);
  CHECK(exit_code_for(NumericalRangeError("x")) == kExitNumerical);
  CHECK(exit_code_for(VerificationFailure("x")) == kExitVerification);
  CHECK(exit_code_for(std::runtime_error("x")) == 1);
}

TEST_CASE("configuration errors name the key") {
  nlohmann::json doc = read_json(kReference);
  CHECK_NOTHROW(parse_config(doc));

  auto bad = doc;
  bad["market"]["bounds"]["c2"] = 1.0;
  try {
    parse_config(bad);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("c2 < nu") != std::string::npos);
  }

  auto unknown = doc;
  unknown["grid"]["steps"] = 10;
  try {
    parse_config(unknown);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("grid.steps") != std::string::npos);
  }

  auto typed = doc;
  typed["grid"]["M"] = "many";
  CHECK_THROWS_AS(parse_config(typed), ConfigError);

  auto tier = doc;
  tier["solver"]["tier"] = "magic";
  CHECK_THROWS_AS(parse_config(tier), ConfigError);

  std::string err;
  const auto out = scratch("badc2");
  CHECK(run_cli("solve-bsde", out, {"market.bounds.c2=1.0"}, &err) == kExitConfig);
  CHECK(err.find("c2 < nu") != std::string::npos);
  CHECK(run_cli("solve-bsde", out, {}, nullptr, "/nonexistent/config.json") == kExitConfig);
}

TEST_CASE("overrides shadow file values and the hash is canonical") {
  nlohmann::json doc = read_json(kReference);
  apply_override(doc, "grid.M=40");
  apply_override(doc, "utility.family=exponential");
  CHECK(doc["grid"]["M"] == 40);
  const auto cfg = parse_config(doc);
  CHECK(cfg.grid.M == 40);
  // key order does not matter
  const auto reordered = nlohmann::json::parse(cfg.resolved.dump());
  CHECK(config_hash(reordered) == config_hash(cfg.resolved));
  CHECK(config_hash(cfg.resolved).size() == 64);
  CHECK_THROWS_AS(apply_override(doc, "grid.M"), ConfigError);
}

TEST_CASE("solve-bsde on the reference configuration") {
  const auto out = scratch("ode");
  REQUIRE(run_cli("solve-bsde", out) == kExitOk);
  const auto res = read_json(out / "bsde.json");
  CHECK(std::abs(res["Y_0"].get<double>() - (0.8 * std::log(0.8) + 0.2)) <= 1e-8);
  CHECK(std::abs(res["Y_0"].get<double>() - 0.02148516) <= 1e-8);

  const auto m = read_json(out / "manifest_solve-bsde.json");
  CHECK(m["exit_code"] == 0);
  CHECK(m["config_hash"] == config_hash(m["config"]));
  for (const auto& f : m["outputs"]) CHECK(fs::exists(out / f.get<std::string>()));

  const auto csv = slurp(out / "bsde.csv");
  CHECK(csv.rfind("t,state,Y,Z,Psi,pi\n", 0) == 0);
}

TEST_CASE("lattice tier and override recording") {
  const auto out = scratch("lattice");
  REQUIRE(run_cli("solve-bsde", out, {"solver.tier=lattice", "grid.M=50"}) == kExitOk);
  const auto m = read_json(out / "manifest_solve-bsde.json");
  CHECK(m["config"]["grid"]["M"] == 50);
  CHECK(m["overrides"].size() == 2);
  const auto res = read_json(out / "bsde.json");
  CHECK(std::abs(res["Y_0"].get<double>() - 0.02148516) <= 1e-7);
}

TEST_CASE("optimal-strategy writes a certified table") {
  const auto out = scratch("strategy");
  REQUIRE(run_cli("optimal-strategy", out, {"mc.n_paths=200", "grid.M=20"}) == kExitOk);
  const auto csv = slurp(out / "strategy.csv");
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "t,state,x,pi,residual");
  std::size_t rows = 0;
  while (std::getline(lines, line)) {
    ++rows;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    const auto c3 = line.find(',', c2 + 1);
    const auto c4 = line.find(',', c3 + 1);
    CHECK(std::stod(line.substr(c3 + 1, c4 - c3 - 1)) == doctest::Approx(0.44628710).epsilon(1e-8));
    CHECK(std::abs(std::stod(line.substr(c4 + 1))) <= 1e-10);
  }
  CHECK(rows > 0);
}

TEST_CASE("simulate is idempotent and thread independent") {
  const auto a = scratch("sim_a");
  const auto b = scratch("sim_b");
  const std::vector<std::string> small = {"mc.n_paths=3000", "mc.dump_paths=50", "grid.M=20"};
  REQUIRE(run_cli("simulate", a, small) == kExitOk);
  REQUIRE(run_cli("simulate", b, small, nullptr, kReference, 4) == kExitOk);
  CHECK(slurp(a / "paths.csv") == slurp(b / "paths.csv"));
  REQUIRE(run_cli("simulate", a, small) == kExitOk);
  CHECK(slurp(a / "paths.csv") == slurp(b / "paths.csv"));
  // header plus 50 paths x 21 grid points
  std::size_t lines = 0;
  for (char ch : slurp(a / "paths.csv")) lines += ch == '\n';
  CHECK(lines == 1 + 50 * 21);
}

TEST_CASE("verify on the reference configuration, then report") {
  const auto out = scratch("verify");
  REQUIRE(run_cli("verify", out) == kExitOk);
  const auto v = read_json(out / "verify.json");
  CHECK(v["pass"] == true);
  for (const auto& c : v["checks"]) {
    CHECK_MESSAGE(c["pass"] == true, c["name"].get<std::string>());
    if (c.contains("se")) {
      CHECK(c.contains("seed"));
      CHECK(c.contains("n_paths"));
      CHECK(c.contains("band"));
    }
  }
  REQUIRE(run_cli("solve-bsde", out) == kExitOk);
  RunOptions o;
  o.subcommand = "report";
  o.out_dir = out.string();
  std::ostringstream log, err;
  CHECK(run(o, log, err) == kExitOk);
  const auto text = slurp(out / "report.txt");
  CHECK(text.find("verify") != std::string::npos);
  CHECK(text.find("MISMATCH") == std::string::npos);

  // a tampered manifest is caught by the hash check
  auto m = read_json(out / "manifest_solve-bsde.json");
  m["config"]["grid"]["M"] = 7;
  write_json(out / "manifest_solve-bsde.json", m);
  std::ostringstream log2, err2;
  CHECK(run(o, log2, err2) == kExitVerification);
}

TEST_CASE("missing closed form is a configuration error") {
  const auto out = scratch("noclosed");
  std::string err;
  CHECK(run_cli("verify", out, {"utility={\"family\":\"exponential_mixture\",\"weights\":[1,1],\"rates\":[1,2]}",
                                "liability={\"kind\":\"constant\",\"value\":0.5}"},
                &err) == kExitConfig);
  CHECK(err.find("closed-form") != std::string::npos);
}

}  // TEST_SUITE
