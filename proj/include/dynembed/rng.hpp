#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace dynembed {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stateless hash of (seed, k1, k2, ...). Every random draw in the library is
// keyed this way, so draws can be computed in any order or in parallel.
constexpr std::uint64_t hash_key(std::uint64_t seed) noexcept { return splitmix64(seed); }

template <typename... Rest>
constexpr std::uint64_t hash_key(std::uint64_t seed, std::uint64_t k, Rest... rest) noexcept {
  return hash_key(splitmix64(seed) ^ splitmix64(k + 0x632be59bd9b4e019ULL), rest...);
}

constexpr double to_unit_interval(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

template <typename... Keys>
constexpr double uniform01(std::uint64_t seed, Keys... keys) noexcept {
  return to_unit_interval(hash_key(seed, static_cast<std::uint64_t>(keys)...));
}

// Box-Muller on two keyed uniforms.
template <typename... Keys>
double standard_normal(std::uint64_t seed, Keys... keys) noexcept {
  const std::uint64_t h = hash_key(seed, static_cast<std::uint64_t>(keys)...);
  const double u1 = to_unit_interval(splitmix64(h ^ 0x1ULL));
  const double u2 = to_unit_interval(splitmix64(h ^ 0x2ULL));
  const double r = std::sqrt(-2.0 * std::log1p(-u1));
  return r * std::cos(2.0 * std::numbers::pi * u2);
}

// Sequential generator for algorithms that consume a stream of numbers
// (k-means++ seeding, restarts). Satisfies UniformRandomBitGenerator.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;
  explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    return splitmix64(state_);
  }

  double uniform() noexcept { return to_unit_interval((*this)()); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept {
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
  }

 private:
  std::uint64_t state_;
};

}  // namespace dynembed
