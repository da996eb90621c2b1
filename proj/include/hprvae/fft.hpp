#pragma once

// Iterative radix-2 FFT on power-of-two sizes. Plain double precision,
// no internal state, no threading: identical output for identical input on
// every run, which the reproducibility guarantees depend on.

#include <complex>
#include <stdexcept>
#include <vector>

#include "hprvae/common.hpp"

namespace hprvae {

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline void fft_inplace(std::vector<std::complex<double>>& a, bool inverse = false) {
  const std::size_t n = a.size();
  if (!is_power_of_two(n)) throw std::invalid_argument("fft: size must be a power of two");
  if (n == 1) return;

  // Bit-reversal permutation.
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }

  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 1.0 : -1.0) * kTwoPi / double(len);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> w = std::polar(1.0, ang * double(k));
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }

  if (inverse) {
    for (auto& x : a) x /= double(n);
  }
}

inline std::vector<std::complex<double>> fft(std::vector<std::complex<double>> a) {
  fft_inplace(a, false);
  return a;
}

inline std::vector<std::complex<double>> ifft(std::vector<std::complex<double>> a) {
  fft_inplace(a, true);
  return a;
}

}  // namespace hprvae
