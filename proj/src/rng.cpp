// SPDX-License-Identifier: Apache-2.0
#include "ups/rng.hpp"

#include <cmath>
#include <numbers>

namespace ups {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::initializer_list<std::uint64_t> words) {
  std::uint64_t h = 0x6a09e667f3bcc908ULL;
  for (std::uint64_t w : words) h = mix64(h ^ mix64(w));
  return h;
}

std::size_t Rng::index(std::size_t n) {
  // Lemire's multiply-shift; bias is below 2^-64 * n and irrelevant here.
  const unsigned __int128 wide = static_cast<unsigned __int128>(engine_()) * n;
  return static_cast<std::size_t>(wide >> 64);
}

namespace {
double box_muller(double u1, double u2) {
  // u1 in (0, 1] keeps log finite.
  return std::sqrt(-2.0 * std::log(1.0 - u1)) * std::cos(2.0 * std::numbers::pi * u2);
}
}  // namespace

double Rng::normal() {
  const double u1 = uniform();
  const double u2 = uniform();
  return box_muller(u1, u2);
}

double hashed_normal(std::uint64_t key) {
  return box_muller(hashed_uniform(key), hashed_uniform(key ^ 0xa5a5a5a5a5a5a5a5ULL));
}

}  // namespace ups
