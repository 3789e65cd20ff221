#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace sg {

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

// 64-bit FNV-1a over raw memory. `seed` lets callers chain hashes. Named
// apart from the typed wrappers below so a string literal can never decay
// into this overload with the seed mistaken for a byte count.
inline std::uint64_t fnv1a64_bytes(const void* data, std::size_t len,
                                   std::uint64_t seed = kFnvOffset) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed = kFnvOffset) {
  return fnv1a64_bytes(s.data(), s.size(), seed);
}

inline std::uint64_t fnv1a64(const std::vector<double>& v,
                             std::uint64_t seed = kFnvOffset) {
  return fnv1a64_bytes(v.data(), v.size() * sizeof(double), seed);
}

// Deterministic sub-stream seeds (per video, per seed index, ...).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
  std::uint64_t h = fnv1a64_bytes(&base, sizeof(base));
  return fnv1a64_bytes(&salt, sizeof(salt), h);
}

}  // namespace sg
