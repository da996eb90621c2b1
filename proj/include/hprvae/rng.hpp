#pragma once

// Deterministic random source used everywhere randomness is needed.
// xoshiro256++ core with splitmix64 seeding; the state is 4 words and can be
// serialized, so checkpoints capture the exact stream position. Gaussian
// draws use Box-Muller (cosine branch only) so one normal consumes exactly
// two uniforms regardless of platform libm quirks.

#include <array>
#include <cstdint>
#include <cmath>
#include <vector>

#include "hprvae/common.hpp"

namespace hprvae {

inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0x853c49e6748fea9bULL) {
    std::uint64_t sm = seed;
    for (auto& word : state_) word = splitmix64_next(sm);
  }

  static Rng from_state(const std::array<std::uint64_t, 4>& state) {
    Rng r;
    r.state_ = state;
    return r;
  }

  const std::array<std::uint64_t, 4>& state() const { return state_; }

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

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform01() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal. u1 is mapped into (0, 1] so the log never sees zero.
  double normal() {
    const double u1 = 1.0 - uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Unbiased integer in [0, n) by rejection.
  std::uint64_t bounded(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("bounded: n must be positive");
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Fisher-Yates; identical order on every platform.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = std::size_t(bounded(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  // Independent child stream; tag distinguishes siblings from one parent.
  Rng fork(std::uint64_t tag) {
    std::uint64_t sm = next_u64() ^ (0x9e3779b97f4a7c15ULL * (tag + 1));
    Rng child(0);
    for (auto& word : child.state_) word = splitmix64_next(sm);
    return child;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::array<std::uint64_t, 4> state_{};
};

// Stable seed derivation for named sub-streams (per note, per network, ...).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag) {
  std::uint64_t sm = master ^ (0xd1342543de82ef95ULL * (tag + 0x632be59bd9b4e019ULL));
  const std::uint64_t a = splitmix64_next(sm);
  const std::uint64_t b = splitmix64_next(sm);
  return a ^ ((b << 17) | (b >> 47));
}

}  // namespace hprvae
