#include "jumpfbsde/rng.hpp"

#include <cmath>
#include <numbers>

namespace jumpfbsde {

namespace {

constexpr std::uint32_t kM0 = 0xD2511F53u;
constexpr std::uint32_t kM1 = 0xCD9E8D57u;
constexpr std::uint32_t kW0 = 0x9E3779B9u;
constexpr std::uint32_t kW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

inline std::uint64_t join(std::uint32_t hi, std::uint32_t lo) {
  return (static_cast<std::uint64_t>(hi) << 32) | lo;
}

}  // namespace

Philox4x32::Block Philox4x32::operator()(Block ctr) const {
  Key key = key_;
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kM0, ctr[0], hi0, lo0);
    mulhilo(kM1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kW0;
    key[1] += kW1;
  }
  return ctr;
}

long poisson_inverse(double lambda, double u) {
  if (lambda <= 0.0) return 0;
  double p = std::exp(-lambda);
  double cdf = p;
  long k = 0;
  // p underflows long before k reaches the cap for any lambda used here
  while (u >= cdf && k < 100000) {
    ++k;
    p *= lambda / static_cast<double>(k);
    if (p == 0.0 && static_cast<double>(k) > lambda) break;
    cdf += p;
  }
  return k;
}

PathStream::PathStream(std::uint64_t seed, std::uint64_t path, double dt, double nu)
    : gen_(seed),
      path_lo_(static_cast<std::uint32_t>(path)),
      path_hi_(static_cast<std::uint32_t>(path >> 32)),
      sqrt_dt_(std::sqrt(dt)),
      lambda_(nu * dt) {}

Increment PathStream::draw(std::uint64_t step) const {
  const auto s = static_cast<std::uint32_t>(step);
  const auto g = gen_({s, path_lo_, path_hi_, 0u});
  // Box-Muller, u1 in (0, 1]
  const double u1 = 1.0 - to_unit(join(g[0], g[1]));
  const double u2 = to_unit(join(g[2], g[3]));
  const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);

  long dn = 0;
  if (lambda_ > 0.0) {
    const auto q = gen_({s, path_lo_, path_hi_, 1u});
    dn = poisson_inverse(lambda_, to_unit(join(q[0], q[1])));
  }
  return {z * sqrt_dt_, dn};
}

}  // namespace jumpfbsde
