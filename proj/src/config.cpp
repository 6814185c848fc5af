#include "jumpfbsde/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "jumpfbsde/errors.hpp"

namespace jumpfbsde {

using nlohmann::json;

namespace {

// Reads typed fields out of one JSON object, recording defaults into the
// resolved copy and rejecting keys nobody asked for.
class Block {
 public:
  Block(const json& doc, std::string path) : path_(std::move(path)) {
    if (!doc.is_object()) throw ConfigError(fmt::format("{}: expected an object", path_));
    doc_ = doc;
    out_ = json::object();
  }

  bool has(const std::string& key) const { return doc_.contains(key); }

  double number(const std::string& key, std::optional<double> def = std::nullopt) {
    const json* v = get(key, def.has_value());
    if (!v) return put(key, *def);
    if (!v->is_number()) throw ConfigError(fmt::format("{}: expected a number", where(key)));
    const double d = v->get<double>();
    if (!std::isfinite(d)) throw ConfigError(fmt::format("{}: must be finite", where(key)));
    return put(key, d);
  }

  std::uint64_t integer(const std::string& key, std::optional<std::uint64_t> def = std::nullopt) {
    const json* v = get(key, def.has_value());
    if (!v) {
      out_[key] = *def;
      return *def;
    }
    if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() && v->get<long long>() < 0)) {
      throw ConfigError(fmt::format("{}: expected a non-negative integer", where(key)));
    }
    const auto u = v->get<std::uint64_t>();
    out_[key] = u;
    return u;
  }

  std::string string(const std::string& key, std::optional<std::string> def = std::nullopt) {
    const json* v = get(key, def.has_value());
    if (!v) {
      out_[key] = *def;
      return *def;
    }
    if (!v->is_string()) throw ConfigError(fmt::format("{}: expected a string", where(key)));
    out_[key] = *v;
    return v->get<std::string>();
  }

  bool boolean(const std::string& key, bool def) {
    const json* v = get(key, true);
    if (!v) {
      out_[key] = def;
      return def;
    }
    if (!v->is_boolean()) throw ConfigError(fmt::format("{}: expected true or false", where(key)));
    out_[key] = *v;
    return v->get<bool>();
  }

  std::vector<double> numbers(const std::string& key, std::optional<std::vector<double>> def = std::nullopt) {
    const json* v = get(key, def.has_value());
    if (!v) {
      out_[key] = *def;
      return *def;
    }
    if (!v->is_array()) throw ConfigError(fmt::format("{}: expected an array of numbers", where(key)));
    std::vector<double> out;
    for (std::size_t k = 0; k < v->size(); ++k) {
      const auto& e = (*v)[k];
      if (!e.is_number() || !std::isfinite(e.get<double>())) {
        throw ConfigError(fmt::format("{}[{}]: expected a finite number", where(key), k));
      }
      out.push_back(e.get<double>());
    }
    out_[key] = out;
    return out;
  }

  std::vector<std::string> strings(const std::string& key, std::vector<std::string> def) {
    const json* v = get(key, true);
    if (!v) {
      out_[key] = def;
      return def;
    }
    if (!v->is_array()) throw ConfigError(fmt::format("{}: expected an array of strings", where(key)));
    std::vector<std::string> out;
    for (std::size_t k = 0; k < v->size(); ++k) {
      if (!(*v)[k].is_string()) throw ConfigError(fmt::format("{}[{}]: expected a string", where(key), k));
      out.push_back((*v)[k].get<std::string>());
    }
    out_[key] = out;
    return out;
  }

  /// Raw sub-document (for nested blocks and time functions).
  const json* raw(const std::string& key, bool optional) { return get(key, optional); }
  void set(const std::string& key, json v) { out_[key] = std::move(v); }

  std::string where(const std::string& key) const { return path_ + "." + key; }
  const std::string& path() const { return path_; }

  /// Rejects unread keys and returns the resolved object.
  json finish() const {
    for (const auto& [k, v] : doc_.items()) {
      if (!seen_.count(k)) throw ConfigError(fmt::format("{}: unknown key", where(k)));
    }
    return out_;
  }

 private:
  const json* get(const std::string& key, bool optional) {
    seen_.insert(key);
    if (!doc_.contains(key) || doc_.at(key).is_null()) {
      if (optional) return nullptr;
      throw ConfigError(fmt::format("{}: required key is missing", where(key)));
    }
    return &doc_.at(key);
  }
  double put(const std::string& key, double v) {
    out_[key] = v;
    return v;
  }

  json doc_;
  json out_;
  std::string path_;
  std::set<std::string> seen_;
};

TimeFunction parse_time_function(Block& parent, const std::string& key, std::optional<double> def) {
  const json* v = parent.raw(key, def.has_value());
  if (!v) {
    parent.set(key, *def);
    return TimeFunction::constant(*def);
  }
  if (v->is_number()) {
    parent.set(key, *v);
    return TimeFunction::constant(v->get<double>());
  }
  Block b(*v, parent.where(key));
  const std::string kind = b.string("kind");
  TimeFunction f;
  if (kind == "constant") {
    f = TimeFunction::constant(b.number("value"));
  } else if (kind == "piecewise") {
    auto breaks = b.numbers("breaks");
    auto values = b.numbers("values");
    f = TimeFunction::piecewise(std::move(breaks), std::move(values));
  } else if (kind == "affine") {
    const double a = b.number("a");
    const double s = b.number("b");
    f = TimeFunction::affine(a, s);
  } else {
    throw ConfigError(fmt::format("{}: unknown kind '{}' (constant | piecewise | affine)", b.where("kind"), kind));
  }
  parent.set(key, b.finish());
  return f;
}

json object_or_empty(Block& parent, const std::string& key) {
  const json* v = parent.raw(key, true);
  return v ? *v : json::object();
}

}  // namespace

const std::vector<std::string>& known_checks() {
  static const std::vector<std::string> checks{"gateaux", "utility_gap", "martingale",
                                               "jump_identity", "q_measure", "hypotheses"};
  return checks;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError(fmt::format("override '{}' must have the form key=value", assignment));
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &doc;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    if (parts[k].empty()) throw ConfigError(fmt::format("override '{}': empty path component", assignment));
    if (!node->is_object()) {
      throw ConfigError(fmt::format("override '{}': '{}' is not an object", assignment, parts[k - 1]));
    }
    if (k + 1 == parts.size()) {
      (*node)[parts[k]] = value;
    } else {
      node = &(*node)[parts[k]];
      if (node->is_null()) *node = json::object();
    }
  }
}

ExperimentConfig parse_config(const json& doc) {
  ExperimentConfig cfg;
  Block top(doc, "config");
  json resolved = json::object();

  // grid first: coefficient validation needs it
  {
    Block b(object_or_empty(top, "grid"), "grid");
    const double T = b.number("T", 1.0);
    const auto M = b.integer("M", 100);
    if (!(T > 0.0)) throw ConfigError(fmt::format("grid.T: must be positive (got {})", T));
    if (M == 0) throw ConfigError("grid.M: must be positive");
    cfg.grid = TimeGrid{T, static_cast<std::size_t>(M)};
    resolved["grid"] = b.finish();
  }
  {
    const json* raw = top.raw("market", false);
    Block b(*raw, "market");
    const std::string mode = b.string("mode");
    MarketCoefficients& m = cfg.market;
    if (mode == "pure_jump") m.mode = MarketMode::pure_jump;
    else if (mode == "diffusive") m.mode = MarketMode::diffusive;
    else throw ConfigError(fmt::format("market.mode: unknown mode '{}' (diffusive | pure_jump)", mode));
    m.mu = parse_time_function(b, "mu", std::nullopt);
    m.sigma = parse_time_function(b, "sigma", m.mode == MarketMode::pure_jump ? std::optional<double>(0.0) : std::nullopt);
    m.eta = parse_time_function(b, "eta", std::nullopt);
    m.nu = b.number("nu");
    m.s0 = b.number("s0", 1.0);
    Block bb(object_or_empty(b, "bounds"), "market.bounds");
    m.bounds.mu_max = bb.number("mu_max", 10.0);
    m.bounds.sigma_max = bb.number("sigma_max", 10.0);
    m.bounds.eta_max = bb.number("eta_max", 10.0);
    m.bounds.sigma_min = bb.number("sigma_min", 1e-4);
    m.bounds.eta_min = bb.number("eta_min", 1e-8);
    if (m.mode == MarketMode::pure_jump) {
      m.bounds.c1 = bb.number("c1");
      m.bounds.c2 = bb.number("c2");
    } else {
      bb.raw("c1", true);
      bb.raw("c2", true);
    }
    b.set("bounds", bb.finish());
    resolved["market"] = b.finish();
    m.validate(cfg.grid);
  }
  {
    const json* raw = top.raw("utility", false);
    Block b(*raw, "utility");
    const std::string family = b.string("family");
    if (family == "exponential") {
      cfg.utility = UtilityFunction::exponential(b.number("delta"));
    } else if (family == "exponential_mixture") {
      auto w = b.numbers("weights");
      auto r = b.numbers("rates");
      cfg.utility = UtilityFunction::mixture(std::move(w), std::move(r));
    } else {
      throw ConfigError(fmt::format("utility.family: unknown family '{}' (exponential | exponential_mixture)", family));
    }
    resolved["utility"] = b.finish();
  }
  {
    Block b(object_or_empty(top, "liability"), "liability");
    const std::string kind = b.string("kind", "zero");
    if (kind == "zero") cfg.liability = Liability::zero();
    else if (kind == "constant") cfg.liability = Liability::constant(b.number("value"));
    else if (kind == "table") cfg.liability = Liability::count_table(b.numbers("values"));
    else throw ConfigError(fmt::format("liability.kind: unknown kind '{}' (zero | constant | table)", kind));
    resolved["liability"] = b.finish();
  }
  {
    Block b(object_or_empty(top, "mc"), "mc");
    cfg.mc.n_paths = b.integer("n_paths", 100000);
    cfg.mc.seed = b.integer("seed", 7);
    cfg.mc.x0 = b.number("x0", 0.0);
    cfg.mc.dump_paths = b.integer("dump_paths", 1000);
    if (cfg.mc.n_paths < 2) throw ConfigError("mc.n_paths: must be at least 2");
    resolved["mc"] = b.finish();
  }
  {
    Block b(object_or_empty(top, "solver"), "solver");
    SolverSettings& s = cfg.solver;
    s.tier = b.string("tier", "ode");
    if (s.tier != "ode" && s.tier != "lattice" && s.tier != "picard") {
      throw ConfigError(fmt::format("solver.tier: unknown tier '{}' (ode | lattice | picard)", s.tier));
    }
    s.tol = b.number("tol", 1e-12);
    s.policy_tol = b.number("policy_tol", 1e-4);
    s.regression_degree = static_cast<int>(b.integer("regression_degree", 3));
    s.n_iter = b.integer("n_iter", 10);
    s.damping = b.number("damping", 1.0);
    s.tail_eps = b.number("tail_eps", 1e-12);
    s.export_paths = b.integer("export_paths", 100);
    if (!(s.tol > 0.0)) throw ConfigError("solver.tol: must be positive");
    if (!(s.policy_tol >= 0.0)) throw ConfigError("solver.policy_tol: must be non-negative");
    if (s.regression_degree > 8) throw ConfigError("solver.regression_degree: must be at most 8");
    if (s.n_iter == 0) throw ConfigError("solver.n_iter: must be positive");
    if (!(s.damping > 0.0 && s.damping <= 1.0)) throw ConfigError("solver.damping: must lie in (0, 1]");
    if (!(s.tail_eps > 0.0 && s.tail_eps < 1.0)) throw ConfigError("solver.tail_eps: must lie in (0, 1)");
    resolved["solver"] = b.finish();
  }
  {
    Block b(object_or_empty(top, "verify"), "verify");
    cfg.verify.checks = b.strings("checks", known_checks());
    cfg.verify.band = b.number("band", 3.0);
    cfg.verify.checkpoints = b.integer("checkpoints", 10);
    for (const auto& c : cfg.verify.checks) {
      if (std::find(known_checks().begin(), known_checks().end(), c) == known_checks().end()) {
        throw ConfigError(fmt::format("verify.checks: unknown check '{}'", c));
      }
    }
    if (!(cfg.verify.band > 0.0)) throw ConfigError("verify.band: must be positive");
    if (cfg.verify.checkpoints == 0 || cfg.verify.checkpoints > cfg.grid.M) {
      throw ConfigError(fmt::format("verify.checkpoints: must lie in [1, grid.M = {}]", cfg.grid.M));
    }
    resolved["verify"] = b.finish();
  }
  top.finish();
  cfg.resolved = std::move(resolved);
  return cfg;
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config file '{}'", path));
  json doc;
  try {
    doc = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("{}: parse error: {}", path, e.what()));
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return parse_config(doc);
}

std::string config_hash(const json& doc) {
  const std::string text = doc.dump();
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  std::string hex;
  for (unsigned int k = 0; k < len; ++k) hex += fmt::format("{:02x}", digest[k]);
  return hex;
}

}  // namespace jumpfbsde
