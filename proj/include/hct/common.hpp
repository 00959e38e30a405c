#pragma once

// Shared error types and the deterministic RNG used across the project.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace hct {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dimension/shape contract violations (messages name the offending shapes).
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf escaping a forward or backward pass, or non-finite gradients.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Bad config files, unknown keys, out-of-range settings.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// File format problems: bad magic, truncation, malformed images.
class IoError : public Error {
 public:
  using Error::Error;
};

// splitmix64 generator. Chosen over <random> engines+distributions because
// every draw here must be reproducible bit-for-bit across standard library
// implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; the second value of each pair is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Uniform integer in [0, n). Fixed-point scaling keeps the draw portable;
  // the bias of ~n/2^64 is irrelevant at the sizes used here.
  int uniform_int(int n) {
    return static_cast<int>((static_cast<unsigned __int128>(next_u64()) *
                             static_cast<unsigned __int128>(n)) >>
                            64);
  }

  // Derives an independent stream, e.g. one per dataset sample.
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
    Rng r(seed ^ (0x9e3779b97f4a7c15ull * (stream + 1)));
    return r.next_u64();
  }

 private:
  std::uint64_t state_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace hct
