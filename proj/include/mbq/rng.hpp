#pragma once

#include <cstdint>

namespace mbq {

/// Counter-based generator: the i-th 64-bit word of stream `seed` is
/// splitmix64(seed + (i + 1) * 0x9E3779B97F4A7C15). The whole state is the
/// pair (seed, counter), so streams are identical on every platform and can
/// be checkpointed exactly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t counter = 0) noexcept
      : seed_(seed), counter_(counter) {}

  std::uint64_t next_u64() noexcept;

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;

  /// Uniform on (0, 1].
  double uniform_open_low() noexcept { return 1.0 - uniform(); }

  /// Standard normal via Box-Muller; consumes exactly two words.
  double normal() noexcept;

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) noexcept;

  /// Independent child stream; does not advance this generator.
  Rng split(std::uint64_t stream) const noexcept;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

}  // namespace mbq
