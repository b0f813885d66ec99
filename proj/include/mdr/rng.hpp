#pragma once

// Seeded random streams with platform-independent draws.
//
// std::uniform_*_distribution are implementation-defined, so the draws below
// are computed directly from the raw 64-bit engine output. Everything that
// must be bit-reproducible across toolchains goes through Rng.

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

namespace mdr {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xCBF29CE484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Derives an independent child seed from a parent seed and a list of tags.
template <class... Tags>
std::uint64_t derive_seed(std::uint64_t seed, const Tags&... tags) {
  std::uint64_t h = splitmix64(seed);
  auto mix = [&h](const auto& tag) {
    if constexpr (std::is_convertible_v<decltype(tag), std::string_view>) {
      h = splitmix64(h ^ fnv1a64(std::string_view(tag)));
    } else {
      h = splitmix64(h ^ static_cast<std::uint64_t>(tag));
    }
  };
  (mix(tags), ...);
  return h;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, n). Unbiased (Lemire's multiply-shift with rejection).
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    unsigned __int128 m = static_cast<unsigned __int128>(next()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        m = static_cast<unsigned __int128>(next()) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

  template <class T>
  void shuffle(std::vector<T>& items) {
    shuffle(std::span<T>(items));
  }

  /// k distinct indices from [0, n), in draw order (Floyd's algorithm).
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
    std::vector<std::size_t> out;
    if (k == 0) return out;
    out.reserve(k);
    if (k * 4 >= n) {
      // dense case: partial Fisher-Yates over an explicit index list
      std::vector<std::size_t> idx(n);
      for (std::size_t i = 0; i < n; ++i) idx[i] = i;
      for (std::size_t i = 0; i < k; ++i) {
        std::swap(idx[i], idx[i + below(n - i)]);
        out.push_back(idx[i]);
      }
      return out;
    }
    std::unordered_set<std::size_t> seen;
    seen.reserve(k * 2);
    for (std::size_t j = n - k; j < n; ++j) {
      const std::size_t t = below(j + 1);
      const std::size_t pick = seen.insert(t).second ? t : j;
      if (pick == j) seen.insert(j);
      out.push_back(pick);
    }
    return out;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mdr
