#pragma once

#include <cmath>
#include <complex>
#include <cstdint>

namespace nlsft {

/// splitmix64-based counter generator.  Streams are derived from a
/// (seed, stream) pair so per-amplifier noise draws are reproducible
/// regardless of evaluation order.
class SplitStream {
 public:
  SplitStream(std::uint64_t seed, std::uint64_t stream = 0)
      : state_(mix(mix(seed) ^ mix(stream ^ 0x9E3779B97F4A7C15ull))) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    return mix(state_);
  }

  /// Uniform in (0, 1].
  double next_uniform() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  /// Circular complex Gaussian with E|w|^2 = variance.
  std::complex<double> next_complex_gaussian(double variance) {
    const double u1 = next_uniform();
    const double u2 = next_uniform();
    const double r = std::sqrt(-variance * std::log(u1));
    const double phi = 2.0 * M_PI * u2;
    return {r * std::cos(phi), r * std::sin(phi)};
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

}  // namespace nlsft
