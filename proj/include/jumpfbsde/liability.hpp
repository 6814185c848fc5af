#pragma once

#include <functional>
#include <string>
#include <vector>

#include "jumpfbsde/market.hpp"

namespace jumpfbsde {

/// Terminal liability H as a bounded function of (N_T, W_T).
class Liability {
 public:
  using Fn = std::function<double(long n_T, double w_T)>;

  Liability() : Liability(zero()) {}

  static Liability zero();
  static Liability constant(double c);
  /// H = table[min(N_T, table.size() - 1)].
  static Liability count_table(std::vector<double> table);
  static Liability custom(std::string label, Fn fn, bool uses_count, bool uses_brownian);

  double operator()(long n_T, double w_T) const { return fn_(n_T, w_T); }
  /// H on path p of a bundle.
  double at(const PathBundle& paths, std::size_t p) const;

  bool is_constant() const { return !uses_count_ && !uses_brownian_; }
  bool uses_count() const { return uses_count_; }
  bool uses_brownian() const { return uses_brownian_; }
  const std::string& label() const { return label_; }
  const std::vector<double>& table() const { return table_; }

 private:
  Liability(std::string label, Fn fn, bool uses_count, bool uses_brownian)
      : label_(std::move(label)), fn_(std::move(fn)), uses_count_(uses_count), uses_brownian_(uses_brownian) {}

  std::string label_;
  Fn fn_;
  bool uses_count_ = false;
  bool uses_brownian_ = false;
  std::vector<double> table_;
};

}  // namespace jumpfbsde
