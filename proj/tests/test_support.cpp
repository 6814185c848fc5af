#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "jumpfbsde/io.hpp"
#include "jumpfbsde/liability.hpp"
#include "jumpfbsde/parallel.hpp"
#include "jumpfbsde/regression.hpp"
#include "jumpfbsde/rng.hpp"
#include "jumpfbsde/stats.hpp"

using namespace jumpfbsde;

TEST_SUITE("support") {

TEST_CASE("Philox known-answer vectors") {
  const Philox4x32 zero(Philox4x32::Key{0u, 0u});
  CHECK(zero({0u, 0u, 0u, 0u}) == Philox4x32::Block{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  const Philox4x32 ones(Philox4x32::Key{0xffffffffu, 0xffffffffu});
  CHECK(ones({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}) ==
        Philox4x32::Block{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  const Philox4x32 pi(Philox4x32::Key{0xa4093822u, 0x299f31d0u});
  CHECK(pi({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}) ==
        Philox4x32::Block{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("Poisson inversion") {
  CHECK(poisson_inverse(0.5, 0.0) == 0);
  CHECK(poisson_inverse(0.5, std::exp(-0.5) * 0.999) == 0);
  CHECK(poisson_inverse(0.5, std::exp(-0.5) * 1.001) == 1);
  CHECK(poisson_inverse(0.0, 0.9) == 0);
  // frequencies over a uniform grid reproduce the pmf
  const int n = 200000;
  std::vector<int> hist(8, 0);
  for (int k = 0; k < n; ++k) {
    const long v = poisson_inverse(1.2, (k + 0.5) / n);
    if (v < 8) ++hist[static_cast<std::size_t>(v)];
  }
  double pk = std::exp(-1.2);
  for (std::size_t k = 0; k < 5; ++k) {
    CHECK(hist[k] / static_cast<double>(n) == doctest::Approx(pk).epsilon(1e-4));
    pk *= 1.2 / static_cast<double>(k + 1);
  }
}

TEST_CASE("running statistics merge like a single pass") {
  std::vector<double> xs;
  for (int k = 0; k < 1000; ++k) xs.push_back(std::sin(0.37 * k) * 3.0 + 1.0);
  RunningStats all;
  for (double x : xs) all.add(x);
  RunningStats a, b;
  for (int k = 0; k < 1000; ++k) (k < 313 ? a : b).add(xs[static_cast<std::size_t>(k)]);
  a.merge(b);
  CHECK(a.n == all.n);
  CHECK(a.mean == doctest::Approx(all.mean).epsilon(1e-13));
  CHECK(a.variance() == doctest::Approx(all.variance()).epsilon(1e-12));

  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= 1000.0;
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= 999.0;
  CHECK(all.mean == doctest::Approx(mean).epsilon(1e-13));
  CHECK(all.variance() == doctest::Approx(var).epsilon(1e-12));
}

TEST_CASE("chunked reductions do not depend on the thread count") {
  auto f = [](std::size_t i) { return std::exp(std::sin(static_cast<double>(i))) * 1e-3; };
  set_num_threads(1);
  const double s1 = ordered_sum(100003, f);
  const auto st1 = chunked_stats(100003, 2, [&](std::size_t i, std::vector<RunningStats>& acc) {
    acc[0].add(f(i));
    acc[1].add(-f(i) * f(i));
  });
  for (std::size_t t : {2u, 3u, 8u}) {
    set_num_threads(t);
    CHECK(ordered_sum(100003, f) == s1);
    const auto st = chunked_stats(100003, 2, [&](std::size_t i, std::vector<RunningStats>& acc) {
      acc[0].add(f(i));
      acc[1].add(-f(i) * f(i));
    });
    CHECK(st[0].mean == st1[0].mean);
    CHECK(st[1].m2 == st1[1].m2);
  }
  set_num_threads(1);
}

TEST_CASE("parallel_chunks rethrows the lowest failing chunk") {
  set_num_threads(4);
  try {
    parallel_chunks(10000, [](std::size_t c, std::size_t, std::size_t) {
      if (c == 3 || c == 7) throw std::runtime_error("chunk " + std::to_string(c));
    });
    FAIL("expected an exception");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()) == "chunk 3");
  }
  set_num_threads(1);
}

TEST_CASE("least squares recovers exact coefficients and detects rank loss") {
  const std::size_t n = 200;
  std::vector<double> design, y;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = -1.0 + 2.0 * static_cast<double>(i) / (n - 1);
    design.insert(design.end(), {1.0, x, x * x});
    y.push_back(0.5 - 2.0 * x + 3.0 * x * x);
  }
  const auto fit = least_squares(design, n, 3, y, false);
  CHECK(fit.full_rank);
  CHECK(fit.coef[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(fit.coef[1] == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK(fit.coef[2] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(fit.rss <= 1e-20);

  // duplicated column: rank deficient
  std::vector<double> dup;
  for (std::size_t i = 0; i < n; ++i) dup.insert(dup.end(), {1.0, design[i * 3 + 1], 2.0 * design[i * 3 + 1]});
  const auto bad = least_squares(dup, n, 3, y, false);
  CHECK_FALSE(bad.full_rank);
  const auto mn = least_squares(dup, n, 3, y, true);
  CHECK(mn.min_norm);
  // c1 + 2 c2 = -2; minimum norm in unit-scaled columns gives c1 |x| = c2 |2x|
  CHECK(mn.coef[1] + 2.0 * mn.coef[2] == doctest::Approx(-2.0).epsilon(1e-8));
  CHECK(mn.coef[1] == doctest::Approx(2.0 * mn.coef[2]).epsilon(1e-8));

  // all-zero and repeated constant columns are dropped, not flagged
  std::vector<double> padded;
  for (std::size_t i = 0; i < n; ++i) padded.insert(padded.end(), {1.0, 0.0, design[i * 3 + 1], 1.0});
  std::vector<double> lin(n);
  for (std::size_t i = 0; i < n; ++i) lin[i] = 1.0 + design[i * 3 + 1];
  const auto pf = least_squares(padded, n, 4, lin, false);
  CHECK(pf.full_rank);
  CHECK(pf.active == 2);
  CHECK(pf.coef[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pf.coef[1] == 0.0);
  CHECK(pf.coef[3] == 0.0);
}

TEST_CASE("liabilities") {
  const auto t = Liability::count_table({0.0, 0.5, 0.8});
  CHECK(t(0, 0.0) == 0.0);
  CHECK(t(2, 0.0) == 0.8);
  CHECK(t(9, 0.0) == 0.8);
  CHECK(t.uses_count());
  CHECK_FALSE(t.is_constant());
  CHECK(Liability::constant(1.5)(4, -2.0) == 1.5);
  CHECK(Liability::zero().is_constant());
  const auto w = Liability::custom("call", [](long, double x) { return std::max(x, 0.0); }, false, true);
  CHECK(w.uses_brownian());
  CHECK(w(0, 0.3) == 0.3);
}

TEST_CASE("number formatting round-trips and files are written whole") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23}) {
    CHECK(std::stod(format_double(v)) == v);
  }
  const auto dir = std::filesystem::temp_directory_path() / "jumpfbsde_io_test";
  std::filesystem::create_directories(dir);
  CsvWriter csv({"a", "b"});
  csv.row({1.0, 0.1});
  csv.row({2.0, -3.0});
  CHECK_THROWS(csv.row({1.0}));
  csv.save(dir / "t.csv");
  std::ifstream in(dir / "t.csv");
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str() == "a,b\n1,0.10000000000000001\n2,-3\n");

  write_json(dir / "t.json", nlohmann::json{{"k", 0.1}});
  CHECK(read_json(dir / "t.json")["k"].get<double>() == 0.1);
  std::filesystem::remove_all(dir);
}

}  // TEST_SUITE
