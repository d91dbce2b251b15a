#pragma once

#include "lfi/common.hpp"

#include <cstdint>
#include <limits>
#include <random>

namespace lfi {

/// Named random streams. Every consumer of randomness derives its engine from
/// (seed, stream, index) so results do not depend on call order.
enum class Stream : std::uint64_t {
  sample = 1,
  mine = 2,
  split = 3,
  init = 4,
  shuffle = 5,
  evaluation = 6,
  toys = 7,
  observed = 8,
  bootstrap = 9,
  histogram = 10,
  smear = 11,
};

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
  return mix64(mix64(mix64(seed) ^ static_cast<std::uint64_t>(stream)) ^ index);
}

/// Stable 64-bit key of a parameter point (bit pattern of both coordinates).
std::uint64_t point_key(const ParameterPoint& p);

/// Counter-based SplitMix64 generator. Cheap to construct, which lets every
/// mined record own its stream.
class Engine {
 public:
  using result_type = std::uint64_t;

  explicit Engine(std::uint64_t state) : state_(state) {}
  Engine(std::uint64_t seed, Stream stream, std::uint64_t index = 0)
      : state_(derive_seed(seed, stream, index)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double normal() { return normal_(*this); }

 private:
  std::uint64_t state_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace lfi
