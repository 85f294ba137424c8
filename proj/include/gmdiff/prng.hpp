#pragma once

// Counter-based splittable PRNG. Every output is mix64(key ^ mix64(counter)),
// a pure function of (key, counter), so child streams with distinct keys can
// never interleave state. split() derives a child key without advancing the
// parent. Normal draws use Box-Muller without spare caching: one draw always
// consumes exactly two uniforms, which keeps streams reproducible under any
// interleaving of uniform() and normal() calls.

#include <cstddef>
#include <cstdint>
#include <cmath>
#include <numbers>
#include <string_view>

namespace gmdiff {

inline constexpr std::uint64_t kGolden64 = 0x9e3779b97f4a7c15ULL;

inline std::uint64_t mix64(std::uint64_t z) {
  z += kGolden64;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(const void* data, std::size_t len) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s) {
  return fnv1a64(s.data(), s.size());
}

class Prng {
 public:
  explicit Prng(std::uint64_t seed) : key_(mix64(seed ^ kSeedDomain)) {}

  std::uint64_t next_u64() { return mix64(key_ ^ mix64(counter_++)); }

  // Uniform in (0,1); the open interval keeps log() in normal() finite.
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Child streams. Label and index splits live in separate key domains, and
  // neither advances the parent's counter.
  Prng split(std::string_view label) const {
    return Prng(from_key{}, mix64(key_ ^ kLabelDomain ^ fnv1a64(label)));
  }
  Prng split(std::uint64_t index) const {
    return Prng(from_key{}, mix64(key_ ^ kIndexDomain ^ mix64(index)));
  }

  std::uint64_t key() const { return key_; }

 private:
  struct from_key {};
  Prng(from_key, std::uint64_t key) : key_(key) {}

  static constexpr std::uint64_t kSeedDomain = 0x7fb5d329728ea185ULL;
  static constexpr std::uint64_t kLabelDomain = 0x81dadef4bc2dd44dULL;
  static constexpr std::uint64_t kIndexDomain = 0x99bcf6822b23ca35ULL;

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace gmdiff
