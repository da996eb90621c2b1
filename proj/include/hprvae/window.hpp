#pragma once

// Analysis windows. All windows are odd-length, symmetric, and normalized to
// unit coefficient sum, so a stationary sinusoid of amplitude a shows a main
// lobe peak of a/2 in the frame transform regardless of window choice.

#include <cstddef>
#include <string>
#include <vector>

#include "hprvae/common.hpp"

namespace hprvae {

enum class WindowKind { rectangular, hann, blackman_harris };

inline std::string to_string(WindowKind kind) {
  switch (kind) {
    case WindowKind::rectangular: return "rectangular";
    case WindowKind::hann: return "hann";
    case WindowKind::blackman_harris: return "blackman_harris";
  }
  throw std::invalid_argument("unknown window kind");
}

inline WindowKind window_kind_from_string(const std::string& name) {
  if (name == "rectangular") return WindowKind::rectangular;
  if (name == "hann") return WindowKind::hann;
  if (name == "blackman_harris") return WindowKind::blackman_harris;
  throw std::invalid_argument("unknown window kind: " + name);
}

// Cosine-series coefficients (sign-alternating form w[n] = sum_m (-1)^m a_m cos(...)).
inline std::vector<double> window_cosine_terms(WindowKind kind) {
  switch (kind) {
    case WindowKind::rectangular: return {1.0};
    case WindowKind::hann: return {0.5, 0.5};
    case WindowKind::blackman_harris: return {0.35875, 0.48829, 0.14128, 0.01168};
  }
  throw std::invalid_argument("unknown window kind");
}

// Symmetric window of odd size >= 3, normalized so coefficients sum to 1.
inline std::vector<double> make_window(WindowKind kind, int size) {
  if (size < 3 || size % 2 == 0)
    throw std::invalid_argument("make_window: size must be odd and >= 3");
  const auto terms = window_cosine_terms(kind);
  std::vector<double> w(std::size_t(size), 0.0);
  double sum = 0.0;
  for (int n = 0; n < size; ++n) {
    double v = 0.0;
    for (std::size_t m = 0; m < terms.size(); ++m) {
      const double sign = (m % 2 == 0) ? 1.0 : -1.0;
      v += sign * terms[m] * std::cos(kTwoPi * double(m) * double(n) / double(size - 1));
    }
    w[std::size_t(n)] = v;
    sum += v;
  }
  for (auto& v : w) v /= sum;
  return w;
}

// Sum of the raw (un-normalized) coefficients; the same constant make_window
// divides by. Needed by the closed-form window transform.
inline double window_norm_constant(WindowKind kind, int size) {
  if (size < 3 || size % 2 == 0)
    throw std::invalid_argument("window_norm_constant: size must be odd and >= 3");
  const auto terms = window_cosine_terms(kind);
  double sum = 0.0;
  for (int n = 0; n < size; ++n) {
    for (std::size_t m = 0; m < terms.size(); ++m) {
      const double sign = (m % 2 == 0) ? 1.0 : -1.0;
      sum += sign * terms[m] * std::cos(kTwoPi * double(m) * double(n) / double(size - 1));
    }
  }
  return sum;
}

// Periodic Hann used by the overlap-add stage (exact partition of unity at
// 50% overlap).
inline std::vector<double> periodic_hann(int size) {
  if (size < 2) throw std::invalid_argument("periodic_hann: size must be >= 2");
  std::vector<double> w(std::size_t(size), 0.0);
  for (int n = 0; n < size; ++n)
    w[std::size_t(n)] = 0.5 - 0.5 * std::cos(kTwoPi * double(n) / double(size));
  return w;
}

}  // namespace hprvae
