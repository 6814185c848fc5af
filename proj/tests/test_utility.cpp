#include <doctest.h>

#include <cmath>
#include <vector>

#include "jumpfbsde/errors.hpp"
#include "jumpfbsde/utility.hpp"

using namespace jumpfbsde;

namespace {

// plain bisection on a decreasing function
double bisect_decreasing(double target, double lo, double hi, double (*f)(double)) {
  for (int k = 0; k < 200; ++k) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) > target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double mixture_du(double x) { return std::exp(-x) + 2.0 * std::exp(-2.0 * x); }

}  // namespace

TEST_SUITE("utility") {

TEST_CASE("exponential values at zero") {
  const auto v = evaluate(UtilityFunction::exponential(1.0), 0.0);
  CHECK(v.u == -1.0);
  CHECK(v.du == 1.0);
  CHECK(v.d2u == -1.0);
  CHECK(v.d3u == 1.0);
  CHECK(v.ara == 1.0);

  const auto U2 = UtilityFunction::exponential(2.0);
  CHECK(U2.du(0.0) == 2.0);
  CHECK(U2.ara(0.0) == 2.0);
  CHECK(U2.ara(3.7) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(U2.k() == 2.0);
}

TEST_CASE("mixture values by hand") {
  const auto U = UtilityFunction::mixture({1.0, 1.0}, {1.0, 2.0});
  // U' = sum w d e^{-d x}, U'' = -sum w d^2 e^{-d x}
  CHECK(U.du(0.0) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(U.ara(0.0) == doctest::Approx(5.0 / 3.0).epsilon(1e-14));
  CHECK(U.u(0.0) == doctest::Approx(-2.0).epsilon(1e-15));
  const double x = 0.4;
  const double d3 = std::exp(-x) + 8.0 * std::exp(-2.0 * x);
  CHECK(U.d3u(x) == doctest::Approx(d3).epsilon(1e-14));
  CHECK(U.k() == 1.0);
}

TEST_CASE("shape properties over a grid") {
  const std::vector<UtilityFunction> family = {UtilityFunction::exponential(1.5),
                                                UtilityFunction::mixture({0.3, 0.7}, {0.5, 3.0})};
  for (const auto& U : family) {
    for (double x = -5.0; x <= 5.0; x += 0.25) {
      CHECK(U.du(x) > 0.0);
      CHECK(U.d2u(x) < 0.0);
      CHECK(U.ara(x) >= U.k() - 1e-12);
      CHECK(U.inv_du(U.du(x)) == doctest::Approx(x).epsilon(1e-10).scale(1.0));
      CHECK(U.log_du(x) == doctest::Approx(std::log(U.du(x))).epsilon(1e-13));
    }
  }
}

TEST_CASE("marginal inversion") {
  CHECK(invert_marginal(UtilityFunction::exponential(1.0), 1.0) == 0.0);
  CHECK(invert_marginal(UtilityFunction::exponential(2.0), 2.0) == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));
  const auto U = UtilityFunction::mixture({1.0, 1.0}, {1.0, 2.0});
  CHECK(std::abs(invert_marginal(U, 3.0)) <= 1e-12);
  for (double m : {1e-6, 0.01, 0.5, 3.0, 40.0, 1e6}) {
    const double ref = bisect_decreasing(m, -50.0, 50.0, mixture_du);
    CHECK(invert_marginal(U, m) == doctest::Approx(ref).epsilon(1e-10).scale(1.0));
  }
  CHECK_THROWS(invert_marginal(U, -1.0));
  CHECK_THROWS(invert_marginal(U, 0.0));
}

TEST_CASE("shift_marginal solves U'(s) = U'(w) e^c") {
  const auto U = UtilityFunction::mixture({0.5, 0.5}, {0.5, 2.0});
  for (double w : {-2.0, 0.0, 1.0}) {
    for (double c : {-0.7, 0.0, 0.3}) {
      const double s = U.shift_marginal(w, c);
      CHECK(U.log_du(s) == doctest::Approx(U.log_du(w) + c).epsilon(1e-11));
    }
  }
  // exponential closed form: s = w - c / delta
  const auto E = UtilityFunction::exponential(2.0);
  CHECK(E.shift_marginal(1.0, 0.4) == doctest::Approx(0.8).epsilon(1e-14));
}

TEST_CASE("invalid parameters are rejected") {
  CHECK_THROWS_AS(UtilityFunction::exponential(0.0), ConfigError);
  CHECK_THROWS_AS(UtilityFunction::exponential(-1.0), ConfigError);
  CHECK_THROWS_AS(UtilityFunction::mixture({1.0}, {1.0, 2.0}), ConfigError);
  CHECK_THROWS_AS(UtilityFunction::mixture({1.0, -1.0}, {1.0, 2.0}), ConfigError);
  CHECK_THROWS_AS(UtilityFunction::mixture({1.0, 1.0}, {1.0, 0.0}), ConfigError);
}

}  // TEST_SUITE
