#pragma once

// Portable random numbers.  The exact bit streams are part of the output
// contract (prompt sets and manifests must be identical across platforms), so
// nothing here goes through <random> distributions, whose algorithms are
// implementation-defined.

#include <cstdint>
#include <span>
#include <string_view>
#include <utility>

namespace slicetrack {

/// SplitMix64 step (Steele, Lea & Flood).  Used for seeding and hashing.
constexpr std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// 64-bit FNV-1a.
constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// xoshiro256** 1.0 (Blackman & Vigna), state filled from SplitMix64(seed).
class Xoshiro256 {
 public:
  explicit constexpr Xoshiro256(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : s_) word = splitmix64(sm);
  }

  constexpr std::uint64_t next() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform integer in [0, bound) by rejection: draws below 2^64 mod bound
  /// are discarded, then the value is reduced modulo bound.
  constexpr std::uint64_t uniform(std::uint64_t bound) {
    if (bound <= 1) return 0;
    const std::uint64_t threshold = (0 - bound) % bound;
    while (true) {
      const std::uint64_t r = next();
      if (r >= threshold) return r % bound;
    }
  }

  /// Uniform double in [0, 1) from the top 53 bits.
  constexpr double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::uint64_t s_[4]{};
};

/// Moves a uniform random k-subset of `items` to the front (partial
/// Fisher-Yates: position i swaps with i + uniform(n - i)).
template <typename T>
void partial_shuffle(std::span<T> items, std::size_t k, Xoshiro256& rng) {
  const std::size_t n = items.size();
  for (std::size_t i = 0; i < k && i < n; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.uniform(n - i));
    using std::swap;
    swap(items[i], items[j]);
  }
}

/// Mixes a master seed with a string key into a child seed.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view key) {
  std::uint64_t state = master ^ fnv1a64(key);
  return splitmix64(state);
}

}  // namespace slicetrack
