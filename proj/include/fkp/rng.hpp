#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace fkp {

// Seeded random stream. Draws are built from raw mt19937_64 output with
// hand-written transforms so results are identical across standard libraries.
//
// Streams for different purposes are split from one user seed by hashing the
// seed together with a label:
//   Rng::stream(seed, "kernels"), Rng::stream(seed, "noise"), ...
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  static Rng stream(std::uint64_t seed, std::string_view label);

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal();

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  static std::uint64_t splitmix64(std::uint64_t x);
  static std::uint64_t fnv1a(std::string_view text);

 private:
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace fkp
