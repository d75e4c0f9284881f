#pragma once

#include <cstdint>
#include <initializer_list>

namespace tprobe {

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a base seed and a list of keys
/// (token id, repeat index, purpose tag...). Used so that results depend only
/// on what is computed, never on which worker computed it.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys) noexcept {
  std::uint64_t h = mix64(base);
  for (const std::uint64_t k : keys) {
    h = mix64(h ^ mix64(k + 0x632BE59BD9B4E019ULL));
  }
  return h;
}

// Purpose tags for derive_seed.
namespace seed_tag {
inline constexpr std::uint64_t kMap = 1;
inline constexpr std::uint64_t kReadout = 2;
inline constexpr std::uint64_t kRotation = 3;
inline constexpr std::uint64_t kSample = 4;
inline constexpr std::uint64_t kProbe = 5;
inline constexpr std::uint64_t kPrefix = 6;
inline constexpr std::uint64_t kStrata = 7;
}  // namespace seed_tag

}  // namespace tprobe
