#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace dilo {

// Counter-based deterministic PRNG.
//
// out(i) = finalize(key + (i+1) * GOLDEN) where finalize is the splitmix64
// output permutation and key is derived from (seed, stream label). Draws are
// pure functions of (seed, stream, counter), so results are identical across
// platforms, runs and thread counts, and jump-ahead is a counter assignment.
// Distinct stream labels give independent sequences for one seed.
class CounterRng {
 public:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

  CounterRng(std::uint64_t seed, std::string_view stream)
      : key_(mix(mix(seed + kGolden) ^ fnv1a(stream))), ctr_(0) {}

  std::uint64_t next_u64() { return mix(key_ + (++ctr_) * kGolden); }

  // Uniform in [0, 1) with 53 random bits.
  double next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double next_uniform(double lo, double hi) {
    return lo + (hi - lo) * next_uniform();
  }

  // Standard normal via Box-Muller; consumes two counter values.
  double next_normal() {
    double u1 = next_uniform();
    double u2 = next_uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  void fill_normal(double* out, std::size_t n, double stddev = 1.0) {
    for (std::size_t i = 0; i < n; ++i) out[i] = stddev * next_normal();
  }

  // Uniform integer in [0, n), n > 0. Rejection-free modulo is fine here:
  // n is tiny relative to 2^64 so the bias is far below double precision.
  std::uint64_t next_index(std::uint64_t n) { return next_u64() % n; }

  void skip(std::uint64_t n) { ctr_ += n; }
  std::uint64_t counter() const { return ctr_; }

  // Fisher-Yates with draws from this stream.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  static std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
    return h;
  }

  static std::uint64_t mix(std::uint64_t x) {
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
  }

 private:
  std::uint64_t key_;
  std::uint64_t ctr_;
};

}  // namespace dilo
