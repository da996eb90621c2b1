#pragma once

// Basic numeric conventions shared by every module: dB <-> linear mappings,
// the magnitude floor, pitch helpers, and the error types thrown by the
// data-handling layers.

#include <cmath>
#include <stdexcept>
#include <string>

namespace hprvae {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

// Default clamp for log magnitudes. Anything at or below the floor is
// treated as silence by the synthesis side.
inline constexpr double kMagFloorDb = -120.0;

// Serialized envelope widths: harmonic cepstra are padded to 60 values
// (orders 8..59), residual cepstra are exactly 51 values (order 50).
inline constexpr int kHarmonicWidth = 60;
inline constexpr int kResidualOrder = 50;
inline constexpr int kResidualWidth = kResidualOrder + 1;

// Residual envelopes are subsampled on a fixed grid with this spacing.
inline constexpr double kResidualStepHz = 430.0;

inline double db_to_lin(double db) { return std::pow(10.0, db / 20.0); }

inline double lin_to_db(double lin, double floor_db = kMagFloorDb) {
  const double floor_lin = db_to_lin(floor_db);
  if (!(lin > floor_lin)) return floor_db;
  return 20.0 * std::log10(lin);
}

inline double cents_between(double f_a, double f_b) {
  return 1200.0 * std::log2(f_a / f_b);
}

// Raised by file readers, parsers and the corpus layer when input data is
// malformed or missing.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised when no sustained region satisfying the segmentation rule exists.
struct SegmentationError : DataError {
  using DataError::DataError;
};

// Raised by the training loop when a batch loss stops being finite.
struct DivergenceError : std::runtime_error {
  int epoch;
  explicit DivergenceError(int epoch_idx)
      : std::runtime_error("training diverged at epoch " + std::to_string(epoch_idx)),
        epoch(epoch_idx) {}
};

}  // namespace hprvae
