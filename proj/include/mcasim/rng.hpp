// Deterministic random streams. Every random quantity in the toolkit is drawn
// from a SubstreamRng derived from a single root seed plus a stream name and
// up to two integer coordinates, so results are independent of thread
// scheduling and reproducible across platforms (mt19937_64 is fully
// specified by the standard; doubles are built from raw 64-bit draws).
#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace mcasim {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

class SubstreamRng {
 public:
  SubstreamRng(std::uint64_t seed, std::string_view stream, std::uint64_t a = 0,
               std::uint64_t b = 0) {
    std::uint64_t state = seed;
    std::uint64_t mix = detail::splitmix64(state);
    state ^= detail::fnv1a64(stream);
    mix ^= detail::splitmix64(state);
    state ^= a * 0xd6e8feb86659fd93ULL + 0x2545f4914f6cdd1dULL;
    mix ^= detail::splitmix64(state);
    state ^= b * 0xa0761d6478bd642fULL + 0xe7037ed1a0b428dbULL;
    mix ^= detail::splitmix64(state);
    engine_.seed(mix);
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  bool bernoulli(double p) { return uniform01() < p; }

  /// Uniform integer in [0, n), unbiased by rejection.
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) return 0;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % n;
  }

  /// Uniform k-subset of {0, ..., n-1}, returned sorted.
  std::vector<int> sample_subset(int n, int k) {
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    for (int i = 0; i < k; ++i) {
      int j = i + static_cast<int>(uniform_int(static_cast<std::uint64_t>(n - i)));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mcasim
