#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string_view>

namespace xpo {

/// Counter-based pseudo-random generator with named sub-streams.
///
/// Every draw is a pure function of (key, counter), so sequences are
/// reproducible bit-for-bit across platforms and thread schedules.  Streams
/// are split hierarchically with fork(): a child stream derives a fresh key
/// from the parent key and a stream label, and never shares draws with its
/// parent or siblings.  Training code forks one stream per (iteration,
/// purpose), so adding or removing a consumer in one place does not perturb
/// draws anywhere else.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(mix(seed ^ kSeedSalt)), counter_(0) {}

  /// Child stream keyed by an integer label.
  Rng fork(std::uint64_t stream) const {
    return Rng(FromKey{}, mix(key_ ^ mix(stream + kForkSalt)));
  }

  /// Child stream keyed by a purpose name ("label", "rollout", ...).
  Rng fork(std::string_view purpose) const { return fork(fnv1a(purpose)); }

  std::uint64_t next_u64() { return mix(key_ + (++counter_) * kGamma); }

  /// Uniform double in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  /// Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::uniform_int: n must be > 0");
    // Rejection-free modulo bias is negligible for desk-scale n; use
    // multiply-shift which is exact for n << 2^64.
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  bool bernoulli(double p) { return next_double() < p; }

  /// Standard normal via Box-Muller; consumes exactly two draws per call.
  double normal() {
    double u1 = next_double();
    double u2 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  /// Index sampled from an unnormalized nonnegative weight vector by CDF walk.
  std::size_t categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0))
      throw std::runtime_error("Rng::categorical: all weights are zero");
    double u = next_double() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      acc += weights[i];
      if (u < acc) return i;
    }
    // Rounding can push u past the last partial sum; return last positive.
    for (std::size_t i = weights.size(); i-- > 0;)
      if (weights[i] > 0.0) return i;
    return weights.size() - 1;
  }

  static std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (char c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
    return h;
  }

 private:
  struct FromKey {};
  Rng(FromKey, std::uint64_t key) : key_(key), counter_(0) {}

  // SplitMix64 finalizer.
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;
  static constexpr std::uint64_t kSeedSalt = 0x8C9A1B3D5E7F2468ull;
  static constexpr std::uint64_t kForkSalt = 0xA3B1C5D7E9F80B4Dull;
  static constexpr double kPi = 3.14159265358979323846;

  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace xpo
