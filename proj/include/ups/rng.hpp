// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace ups {

/// splitmix64 finalizer: a bijective 64-bit mixer.
std::uint64_t mix64(std::uint64_t x);

/// Folds a sequence of words into one seed. Order matters.
std::uint64_t derive_seed(std::initializer_list<std::uint64_t> words);

/// FNV-1a of a short tag, so seed streams can be named ("mc", "shuffle", ...).
constexpr std::uint64_t tag(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Maps 64 random bits onto [0, 1) with 53 bits of precision.
inline double bits_to_unit(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Stateless uniform draw in [0, 1) addressed by a counter key.
inline double hashed_uniform(std::uint64_t key) { return bits_to_unit(mix64(key)); }

/// Seeded generator with platform-independent distributions. std::mt19937_64's
/// output sequence is fixed by the standard; the <random> distributions are not,
/// so the conversions are done here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  double uniform() { return bits_to_unit(engine_()); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  /// Standard normal via Box-Muller; one draw per call.
  double normal();

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::size_t>(last - first);
    for (std::size_t i = n; i > 1; --i) {
      const std::size_t j = index(i);
      std::swap(first[i - 1], first[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

/// Standard normal from two counter-addressed uniforms.
double hashed_normal(std::uint64_t key);

}  // namespace ups
