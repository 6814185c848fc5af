#include "jumpfbsde/liability.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "jumpfbsde/errors.hpp"

namespace jumpfbsde {

Liability Liability::zero() {
  return Liability("zero", [](long, double) { return 0.0; }, false, false);
}

Liability Liability::constant(double c) {
  if (!std::isfinite(c)) throw ConfigError(fmt::format("liability constant must be finite (got {})", c));
  return Liability(fmt::format("constant({})", c), [c](long, double) { return c; }, false, false);
}

Liability Liability::count_table(std::vector<double> table) {
  if (table.empty()) throw ConfigError("liability table must be non-empty");
  for (std::size_t k = 0; k < table.size(); ++k) {
    if (!std::isfinite(table[k])) {
      throw ConfigError(fmt::format("liability table entry {} is not finite", k));
    }
  }
  auto shared = table;
  Liability out(fmt::format("count_table(size={})", table.size()),
                [shared](long n, double) {
                  const auto idx = std::min<std::size_t>(static_cast<std::size_t>(std::max(n, 0L)), shared.size() - 1);
                  return shared[idx];
                },
                true, false);
  out.table_ = std::move(table);
  return out;
}

Liability Liability::custom(std::string label, Fn fn, bool uses_count, bool uses_brownian) {
  return Liability(std::move(label), std::move(fn), uses_count, uses_brownian);
}

double Liability::at(const PathBundle& paths, std::size_t p) const {
  if (is_constant()) return fn_(0, 0.0);
  double w = 0.0;
  if (uses_brownian_) {
    for (std::size_t i = 0; i < paths.grid.M; ++i) w += paths.dw(p, i);
  }
  return fn_(paths.count(p, paths.grid.M), w);
}

}  // namespace jumpfbsde
