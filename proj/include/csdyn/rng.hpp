#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

// Counter-based random streams.
//
// Every consumer addresses its randomness as (master seed, tag, index,
// counter); no generator state is carried around. This is what makes
// instances and Monte Carlo ensembles reproducible under any sharding:
// sample i always reads the same counters no matter which thread owns it.
//
// Derivation contract (documented, stable):
//   mix      = SplitMix64 finalizer
//   stream   = mix(mix(seed + PHI*tag) + PHI*(index + 1))
//   draw(j)  = mix(stream_key + PHI*(j + 1))
// where PHI = 0x9e3779b97f4a7c15 (64-bit golden ratio increment).

namespace csdyn {

inline constexpr std::uint64_t kGolden64 = 0x9e3779b97f4a7c15ULL;

inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ULL;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return z;
}

// Stream tags. One tag per independently regenerable object.
enum class StreamTag : std::uint64_t {
  kMatrix = 1,        // sensing matrix entries
  kSignalMask = 2,    // Bernoulli support of the signal
  kSignalValue = 3,   // Gaussian values on the support
  kNoise = 4,         // measurement noise
  kEnsembleMask = 5,  // effective-process x0 support
  kEnsembleValue = 6, // effective-process x0 values
  kEnsembleXi = 7,    // effective-process standard normals
};

/// A keyed, counter-addressed stream of random values.
class RngStream {
 public:
  RngStream() = default;
  RngStream(std::uint64_t seed, StreamTag tag, std::uint64_t index = 0)
      : key_(mix64(mix64(seed + kGolden64 * static_cast<std::uint64_t>(tag)) +
                   kGolden64 * (index + 1))) {}

  std::uint64_t bits(std::uint64_t counter) const {
    return mix64(key_ + kGolden64 * (counter + 1));
  }

  /// Uniform on (0,1]; never 0, so it is safe under log().
  double uniform_pos(std::uint64_t counter) const {
    return static_cast<double>((bits(counter) >> 11) + 1) * 0x1.0p-53;
  }

  /// Uniform on [0,1).
  double uniform(std::uint64_t counter) const {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  /// Standard normal, addressable by index. Box-Muller on counter pairs:
  /// indices 2k and 2k+1 share the uniforms at counters (2k, 2k+1).
  double normal(std::uint64_t index) const {
    const std::uint64_t pair = index >> 1;
    const double u1 = uniform_pos(2 * pair);
    const double u2 = uniform(2 * pair + 1);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    return (index & 1) ? r * std::sin(angle) : r * std::cos(angle);
  }

  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_ = 0;
};

}  // namespace csdyn
