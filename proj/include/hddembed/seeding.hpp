#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace hddembed {

using Rng = std::mt19937_64;

namespace detail {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

/// Child seed for a named stage. Streams for different labels are independent,
/// so adding a stage never perturbs the draws of an existing one.
inline constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view label) {
  return detail::splitmix64(detail::splitmix64(root) ^ detail::fnv1a(label));
}

inline constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view label,
                                           std::uint64_t index) {
  return detail::splitmix64(derive_seed(root, label) + detail::splitmix64(index));
}

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

}  // namespace hddembed
