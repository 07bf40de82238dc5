#pragma once
// Counter-based random streams with platform-independent sampling. The
// standard distributions are implementation-defined, so anything that feeds a
// bit-exact artifact (datasets, shuffles) draws through these helpers.

#include <cstdint>
#include <vector>

namespace stairnet {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Stream key derived from a seed and up to two counters.
constexpr std::uint64_t stream_key(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b);
}

class Rng {
 public:
  explicit Rng(std::uint64_t key) : key_(key) {}

  std::uint64_t next() { return splitmix64(key_ + 0x632BE59BD9B4E019ull * counter_++); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  int below(int n) { return static_cast<int>((static_cast<unsigned __int128>(next()) * std::uint64_t(n)) >> 64); }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Fisher-Yates permutation of 0..n-1 determined by (seed, epoch) alone.
inline std::vector<int> keyed_permutation(int n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<int> p(n);
  for (int i = 0; i < n; ++i) p[i] = i;
  Rng rng(stream_key(seed, 0x5348554646ull, epoch));
  for (int i = n - 1; i > 0; --i) std::swap(p[i], p[rng.below(i + 1)]);
  return p;
}

}  // namespace stairnet
