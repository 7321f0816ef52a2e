#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace augmetrics {

/// 64-bit FNV-1a, used to turn purpose tags into stream keys.
constexpr std::uint64_t fnv1a(std::string_view text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// xoshiro256** with SplitMix64 seeding.
///
/// Streams are derived, never shared: every consumer asks for
/// `Rng::derive(seed, "purpose", i, j...)` and gets a generator whose output
/// depends only on that path. All distribution sampling is implemented here
/// rather than through <random> distributions so that draws are identical
/// across standard library implementations.
class Rng {
public:
  using State = std::array<std::uint64_t, 4>;

  explicit Rng(std::uint64_t key = 0) noexcept;

  static Rng from_state(const State &state) noexcept;

  static Rng derive(std::uint64_t seed, std::string_view purpose,
                    std::initializer_list<std::uint64_t> path = {}) noexcept;

  /// Child stream keyed by this stream's current state and `index`; does not
  /// advance this stream.
  Rng split(std::uint64_t index) const noexcept;

  std::uint64_t next_u64() noexcept;

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept;
  /// Uniform on {0, ..., n-1}; n must be > 0.
  std::uint64_t uniform_int(std::uint64_t n) noexcept;
  bool bernoulli(double p) noexcept;
  double normal() noexcept;
  double normal(double mean, double stddev) noexcept;

  const State &state() const noexcept { return s_; }

  bool operator==(const Rng &) const = default;

private:
  State s_{};
};

std::uint64_t splitmix64(std::uint64_t &x) noexcept;

} // namespace augmetrics
