#include "augmetrics/rng.hpp"

#include <cmath>
#include <numbers>

namespace augmetrics {

std::uint64_t splitmix64(std::uint64_t &x) noexcept {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
  return (x << k) | (x >> (64 - k));
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) noexcept {
  std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  return splitmix64(x);
}

} // namespace

Rng::Rng(std::uint64_t key) noexcept {
  std::uint64_t x = key;
  for (auto &word : s_) {
    word = splitmix64(x);
  }
}

Rng Rng::from_state(const State &state) noexcept {
  Rng r;
  r.s_ = state;
  return r;
}

Rng Rng::derive(std::uint64_t seed, std::string_view purpose,
                std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t key = mix(seed, fnv1a(purpose));
  for (std::uint64_t p : path) {
    key = mix(key, p);
  }
  return Rng(key);
}

Rng Rng::split(std::uint64_t index) const noexcept {
  std::uint64_t key = mix(s_[0] ^ rotl(s_[1], 17), s_[2] ^ rotl(s_[3], 41));
  return Rng(mix(key, index));
}

std::uint64_t Rng::next_u64() noexcept {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() noexcept {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) noexcept {
  return lo + (hi - lo) * uniform();
}

std::uint64_t Rng::uniform_int(std::uint64_t n) noexcept {
  // Rejection sampling on the top bits keeps the draw unbiased.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

bool Rng::bernoulli(double p) noexcept { return uniform() < p; }

double Rng::normal() noexcept {
  // Box-Muller, one variate per call; u1 is kept away from zero.
  const double u1 = (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::normal(double mean, double stddev) noexcept {
  return mean + stddev * normal();
}

} // namespace augmetrics
