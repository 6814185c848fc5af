#pragma once

#include <array>
#include <cstdint>

namespace jumpfbsde {

/// Philox4x32-10 counter-based generator (Salmon et al., Random123).
/// A block is a pure function of (key, counter), so any path/step can be
/// drawn independently of every other one.
class Philox4x32 {
 public:
  using Block = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  explicit Philox4x32(Key key) : key_(key) {}
  explicit Philox4x32(std::uint64_t seed)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

  Block operator()(Block counter) const;

 private:
  Key key_;
};

/// Maps 64 random bits to [0, 1) with 53-bit resolution.
inline double to_unit(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Exact Poisson(lambda) sample by CDF inversion of a single uniform.
long poisson_inverse(double lambda, double u);

/// One time step's driver increments.
struct Increment {
  double dW;
  long dN;
};

/// Deterministic driver stream for one path. Step i uses counters
/// (i, path, 0) for the Gaussian draw and (i, path, 1) for the Poisson draw.
class PathStream {
 public:
  PathStream(std::uint64_t seed, std::uint64_t path, double dt, double nu);

  Increment draw(std::uint64_t step) const;

 private:
  Philox4x32 gen_;
  std::uint32_t path_lo_;
  std::uint32_t path_hi_;
  double sqrt_dt_;
  double lambda_;
};

}  // namespace jumpfbsde
