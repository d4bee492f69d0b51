#pragma once

#include <cmath>
#include <cstdint>

namespace co2sim {

// Counter-based generator: output n is a SplitMix64 finalizer applied to
// key + n * golden.  Streams for distinct (seed, stream) pairs are
// independent for practical purposes, and a stream's output depends only on
// how many draws preceded it, never on platform or library version.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream)
      : key_(mix(mix(seed + 0x9E3779B97F4A7C15ull) ^ stream)) {}

  std::uint64_t next_u64() {
    std::uint64_t z = key_ + (++counter_) * 0x9E3779B97F4A7C15ull;
    return mix(z);
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n), n >= 1.  Rejection-free multiply-shift is
  // biased by at most 2^-64 * n which is irrelevant here; determinism is the
  // contract, not statistical perfection.
  std::uint64_t next_below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Standard normal via Box-Muller.  Consumes exactly two uniforms per call;
  // no spare is cached so the draw count stays predictable.
  double next_gaussian() {
    double u1 = next_double();
    double u2 = next_double();
    // Guard the log against u1 == 0.
    double r = std::sqrt(-2.0 * std::log1p(-u1));
    return r * std::cos(2.0 * M_PI * u2);
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// Stream tags for the fixed consumers of randomness.  Worker streams use the
// worker index directly; these tags live far above any plausible worker count.
inline constexpr std::uint64_t kShardStream = 0x0001000000000001ull;
inline constexpr std::uint64_t kDataStream = 0x0001000000000002ull;

}  // namespace co2sim
