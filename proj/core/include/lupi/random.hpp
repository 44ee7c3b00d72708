#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace lupi {

/// Seeded generator with platform-independent derived distributions.
/// std::mt19937_64's raw stream is fixed by the standard; the library's
/// distribution adaptors are not, so the conversions here are hand-written.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n), n > 0. Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n);

  /// Uniform integer in [lo, hi] inclusive.
  int range(int lo, int hi) { return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo) + 1)); }

  bool bernoulli(double p) { return uniform() < p; }

  /// Fisher-Yates permutation of [0, n).
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::mt19937_64 engine_;
};

/// Mixes a base seed with a stream index (splitmix64 finalizer) so that
/// sub-generators for init, shuffling, etc. do not overlap.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace lupi
