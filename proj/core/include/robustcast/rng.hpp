#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace robustcast {

/// SplitMix64 finalizer. Used to derive independent substream seeds from
/// a root seed plus integer keys.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Seed for substream (key1, key2) under `root`. Chained mixing so that
/// (a, b) and (b, a) map to different streams.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t key1,
                                    std::uint64_t key2 = 0) noexcept {
  return mix64(mix64(mix64(root) ^ key1) ^ (key2 + 0x632BE59BD9B4E019ULL));
}

/// FNV-1a of a role tag such as "data", "model", "eval".
constexpr std::uint64_t tag_hash(std::string_view tag) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Seed for a named role derived from a master seed.
constexpr std::uint64_t role_seed(std::uint64_t master, std::string_view role) noexcept {
  return derive_seed(master, tag_hash(role));
}

/// Deterministic random stream.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. All distributions are implemented here rather than taken from
/// <random>, because the standard library distributions are
/// implementation-defined and would break cross-platform reproducibility.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, bound). bound must be positive.
  std::uint64_t below(std::uint64_t bound);

  /// Uniform integer in [lo, hi] inclusive.
  std::uint64_t between(std::uint64_t lo, std::uint64_t hi) { return lo + below(hi - lo + 1); }

  /// Standard normal via Box-Muller. Values are produced in pairs; the
  /// second of each pair is returned by the following call.
  double normal();

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace robustcast
