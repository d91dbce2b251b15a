#include "lfi/rng.hpp"

#include <bit>

namespace lfi {

std::uint64_t point_key(const ParameterPoint& p) {
  // +0.0 and -0.0 must map to the same stream.
  const double a = p.a == 0.0 ? 0.0 : p.a;
  const double b = p.b == 0.0 ? 0.0 : p.b;
  return mix64(std::bit_cast<std::uint64_t>(a)) ^ (mix64(std::bit_cast<std::uint64_t>(b)) << 1);
}

}  // namespace lfi
