#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace tmlp {

/// splitmix64 step; used for seeding and for deriving independent streams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// xoshiro256++ with an explicit, platform-independent state layout.
/// All randomness in the project flows through this generator so that runs
/// are reproducible bit-for-bit across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : state_) word = splitmix64(sm);
  }

  /// Derives an independent stream, e.g. rng for (seed, consumer_id, step).
  static Rng derive(std::uint64_t seed, std::uint64_t stream,
                    std::uint64_t substream = 0) {
    std::uint64_t sm = seed;
    std::uint64_t a = splitmix64(sm);
    sm ^= 0x1d8af6a2c9f4db31ull * (stream + 1);
    std::uint64_t b = splitmix64(sm);
    sm ^= 0x9f2b4d1e8c3a5f77ull * (substream + 1);
    std::uint64_t c = splitmix64(sm);
    return Rng(a ^ b ^ c);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n) {
    // Lemire rejection-free-ish mapping; bias is negligible for n << 2^64
    // but we reject to keep draws exactly uniform.
    std::uint64_t x = next_u64();
    __uint128_t m = __uint128_t(x) * __uint128_t(n);
    auto lo = std::uint64_t(m);
    if (lo < n) {
      std::uint64_t threshold = (0 - n) % n;
      while (lo < threshold) {
        x = next_u64();
        m = __uint128_t(x) * __uint128_t(n);
        lo = std::uint64_t(m);
      }
    }
    return std::uint64_t(m >> 64);
  }

  /// Standard normal via Box-Muller; consumes two uniforms per pair.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    // avoid log(0)
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::array<std::uint64_t, 4> state_{};
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace tmlp
