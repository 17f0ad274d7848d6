// SPDX-License-Identifier: Apache-2.0
#include "mhnf/rng.hpp"

#include <cmath>
#include <numbers>

namespace mhnf {

std::uint64_t stream_seed(std::uint64_t root, std::string_view name, std::uint64_t index) {
  // FNV-1a over the stream name, then fold in root and index.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return mix64(mix64(root ^ h) + index);
}

std::uint64_t Rng::below(std::uint64_t n) {
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace mhnf
