#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <vector>

#include "hprvae/fft.hpp"
#include "hprvae/rng.hpp"
#include "hprvae/spectral.hpp"
#include "hprvae/twm.hpp"
#include "hprvae/window.hpp"
#include "oracles.hpp"

using namespace hprvae;

namespace {

std::vector<double> sinusoid(double amp, double freq_hz, double phase, double fs,
                             int length, int center) {
  std::vector<double> x(std::size_t(length), 0.0);
  for (int n = 0; n < length; ++n)
    x[std::size_t(n)] = amp * std::cos(kTwoPi * freq_hz * double(n - center) / fs + phase);
  return x;
}

}  // namespace

TEST_CASE("rectangular window is flat and normalized") {
  const auto w = make_window(WindowKind::rectangular, 5);
  REQUIRE(w.size() == 5);
  for (double v : w) REQUIRE(v == Catch::Approx(0.2).margin(1e-15));
}

TEST_CASE("windows are symmetric and sum to one") {
  for (auto kind : {WindowKind::rectangular, WindowKind::hann, WindowKind::blackman_harris}) {
    for (int size : {3, 63, 255, 1023}) {
      const auto w = make_window(kind, size);
      double sum = 0.0;
      for (double v : w) sum += v;
      REQUIRE(sum == Catch::Approx(1.0).margin(1e-12));
      for (int i = 0; i < size; ++i)
        REQUIRE(w[std::size_t(i)] == Catch::Approx(w[std::size_t(size - 1 - i)]).margin(1e-15));
    }
  }
}

TEST_CASE("blackman-harris center value matches the closed form") {
  // The four cosine terms all hit +1 at the center sample, so the raw peak is
  // exactly 1; normalized, the center equals 1 / sum(raw coefficients).
  const int size = 1023;
  const auto w = make_window(WindowKind::blackman_harris, size);
  const double a[4] = {0.35875, 0.48829, 0.14128, 0.01168};
  double raw_sum = 0.0;
  for (int n = 0; n < size; ++n) {
    double v = 0.0;
    for (int m = 0; m < 4; ++m)
      v += ((m % 2 == 0) ? 1.0 : -1.0) * a[m] *
           std::cos(kTwoPi * m * n / double(size - 1));
    raw_sum += v;
  }
  REQUIRE(w[std::size_t(size / 2)] == Catch::Approx(1.0 / raw_sum).epsilon(1e-12));
  REQUIRE(window_norm_constant(WindowKind::blackman_harris, size) ==
          Catch::Approx(raw_sum).epsilon(1e-12));
}

TEST_CASE("window rejects even or tiny sizes") {
  REQUIRE_THROWS_AS(make_window(WindowKind::hann, 1024), std::invalid_argument);
  REQUIRE_THROWS_AS(make_window(WindowKind::hann, 1), std::invalid_argument);
}

TEST_CASE("fft round trip and size validation") {
  Rng rng(11);
  std::vector<std::complex<double>> x(256);
  for (auto& v : x) v = {rng.normal(), rng.normal()};
  const auto back = ifft(fft(x));
  for (std::size_t i = 0; i < x.size(); ++i) {
    REQUIRE(back[i].real() == Catch::Approx(x[i].real()).margin(1e-12));
    REQUIRE(back[i].imag() == Catch::Approx(x[i].imag()).margin(1e-12));
  }
  std::vector<std::complex<double>> bad(100);
  REQUIRE_THROWS_AS(fft_inplace(bad), std::invalid_argument);
}

TEST_CASE("dft_frame matches a direct-sum transform on random frames") {
  Rng rng(42);
  for (const int fft_size : {256, 512, 2048}) {
    const int m = fft_size / 2 - 1;  // odd window shorter than the transform
    const auto w = make_window(WindowKind::blackman_harris, m);
    std::vector<double> x(std::size_t(m), 0.0);
    for (auto& v : x) v = rng.uniform(-1.0, 1.0);

    const auto frame = dft_frame(x, w, fft_size);
    const auto ref = oracles::zero_phase_dft(x, w, fft_size);
    REQUIRE(frame.mag_db.size() == std::size_t(fft_size / 2 + 1));
    for (std::size_t k = 0; k < ref.size(); ++k) {
      const double ref_db = 20.0 * std::log10(std::max(std::abs(ref[k]), 1e-30));
      if (ref_db <= -115.0) continue;  // both clamp near the floor
      REQUIRE(frame.mag_db[k] == Catch::Approx(ref_db).margin(1e-6));
      if (ref_db > -60.0) {
        const double dphi = principal_angle(frame.phase[k] - std::arg(ref[k]));
        REQUIRE(std::abs(dphi) < 1e-8);
      }
    }
  }
}

TEST_CASE("dft_frame of unit DC through a rectangular window reads 0 dB") {
  const int m = 255;
  const auto w = make_window(WindowKind::rectangular, m);
  const std::vector<double> ones(std::size_t(m), 1.0);
  const auto frame = dft_frame(ones, w, 512);
  REQUIRE(frame.mag_db[0] == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(std::abs(principal_angle(frame.phase[0])) < 1e-12);
}

TEST_CASE("exact-bin unit sinusoid peaks at -6.02 dB") {
  const double fs = 44100.0;
  const int n = 2048;
  const int m = 1023;
  const int k0 = 96;
  const double f = double(k0) * fs / double(n);
  const auto w = make_window(WindowKind::blackman_harris, m);
  const auto x = sinusoid(1.0, f, 0.3, fs, m, m / 2);
  const auto frame = dft_frame(x, w, n);
  REQUIRE(frame.mag_db[std::size_t(k0)] == Catch::Approx(-6.0206).margin(2e-3));
  REQUIRE(principal_angle(frame.phase[std::size_t(k0)] - 0.3) ==
          Catch::Approx(0.0).margin(1e-3));
}

TEST_CASE("magnitudes never drop below the floor") {
  const int m = 255;
  const auto w = make_window(WindowKind::blackman_harris, m);
  const std::vector<double> silence(std::size_t(m), 0.0);
  const auto frame = dft_frame(silence, w, 512, -120.0);
  for (double v : frame.mag_db) REQUIRE(v >= -120.0);
  REQUIRE(frame.mag_db[10] == -120.0);
}

TEST_CASE("parabolic refinement is exact on quadratic magnitude triples") {
  const double fs = 48000.0;
  const int n = 1024;
  SpectralFrame frame;
  frame.mag_db.assign(std::size_t(n / 2 + 1), -100.0);
  frame.phase.assign(std::size_t(n / 2 + 1), 0.0);
  const int k0 = 100;
  const double p_true = 0.31;
  const double vertex = -12.5;
  const double curv = -3.0;
  for (int k = k0 - 3; k <= k0 + 3; ++k)
    frame.mag_db[std::size_t(k)] = vertex + curv * (double(k) - double(k0) - p_true) *
                                               (double(k) - double(k0) - p_true);
  const auto peaks = detect_peaks(frame, -40.0, fs);
  REQUIRE(peaks.size() == 1);
  const double bin_hz = fs / double(n);
  REQUIRE(std::abs(peaks[0].freq_hz - (double(k0) + p_true) * bin_hz) < 1e-12 * fs);
  REQUIRE(std::abs(peaks[0].mag_db - vertex) < 1e-12);
}

TEST_CASE("symmetric triple refines to the center bin") {
  SpectralFrame frame;
  frame.mag_db.assign(129, -100.0);
  frame.phase.assign(129, 0.25);
  frame.mag_db[63] = -20.0;
  frame.mag_db[62] = -26.0;
  frame.mag_db[64] = -26.0;
  const auto peaks = detect_peaks(frame, -40.0, 256.0);
  REQUIRE(peaks.size() == 1);
  REQUIRE(peaks[0].freq_hz == Catch::Approx(63.0).margin(1e-12));
  REQUIRE(peaks[0].mag_db == Catch::Approx(-20.0).margin(1e-12));
  REQUIRE(peaks[0].phase == Catch::Approx(0.25).margin(1e-12));
}

TEST_CASE("peaks below threshold are ignored") {
  SpectralFrame frame;
  frame.mag_db.assign(129, -119.0);
  frame.phase.assign(129, 0.0);
  frame.mag_db[40] = -95.0;
  REQUIRE(detect_peaks(frame, -90.0, 256.0).empty());
}

TEST_CASE("detected sinusoid frequency is accurate to a fraction of a bin") {
  const double fs = 44100.0;
  const int n = 2048;
  const int m = 1023;
  const double f = 440.0;  // ~20.43 bins
  const auto w = make_window(WindowKind::blackman_harris, m);
  const auto x = sinusoid(0.8, f, -1.1, fs, m, m / 2);
  const auto frame = dft_frame(x, w, n);
  const auto peaks = detect_peaks(frame, -90.0, fs);
  REQUIRE_FALSE(peaks.empty());
  const Peak* best = &peaks[0];
  for (const auto& pk : peaks)
    if (pk.mag_db > best->mag_db) best = &pk;
  REQUIRE(std::abs(best->freq_hz - f) < 0.5);
  REQUIRE(best->mag_db == Catch::Approx(20.0 * std::log10(0.4)).margin(0.02));
  REQUIRE(principal_angle(best->phase + 1.1) == Catch::Approx(0.0).margin(0.02));
}

TEST_CASE("twm recovers an exact harmonic series") {
  std::vector<Peak> peaks;
  for (int h = 1; h <= 10; ++h) peaks.push_back({328.0 * h, -20.0, 0.0});
  const auto f0 = twm_f0(peaks, 120.0, 1200.0, std::nullopt, 5.0);
  REQUIRE(f0.has_value());
  REQUIRE(*f0 == Catch::Approx(328.0).margin(1.0));
}

TEST_CASE("twm handles a missing fundamental") {
  std::vector<Peak> peaks;
  for (int h = 2; h <= 8; ++h) peaks.push_back({390.0 * h, -25.0, 0.0});
  // The absent fundamental leaves one unmatched predicted harmonic, which
  // costs ~6 error units, so the absence threshold must sit above that here.
  const auto f0 = twm_f0(peaks, 120.0, 1200.0, std::nullopt, 8.0);
  REQUIRE(f0.has_value());
  REQUIRE(*f0 == Catch::Approx(390.0).margin(2.0));

  // Dense-grid argmin agrees with the sparse candidate search.
  double best_err = 1e300;
  double best_f = 0.0;
  for (double c = 120.0; c <= 1200.0; c += 0.05) {
    const double e = twm_error(peaks, c);
    if (e < best_err) {
      best_err = e;
      best_f = c;
    }
  }
  REQUIRE(std::abs(best_f - *f0) < 2.0);
}

TEST_CASE("twm returns absent on empty or hopeless input") {
  REQUIRE_FALSE(twm_f0({}, 120.0, 1200.0, std::nullopt, 5.0).has_value());

  std::vector<Peak> lone{{3000.0, -10.0, 0.0}};
  // No submultiple of 3000 Hz lands in [120, 280].
  REQUIRE_FALSE(twm_f0(lone, 120.0, 280.0, std::nullopt, 5.0).has_value());

  std::vector<Peak> series;
  for (int h = 1; h <= 5; ++h) series.push_back({440.0 * h, -20.0, 0.0});
  // Threshold below any attainable error.
  REQUIRE_FALSE(twm_f0(series, 120.0, 1200.0, std::nullopt, -10.0).has_value());
}

TEST_CASE("twm continuity keeps a clean series stable") {
  std::vector<Peak> peaks;
  for (int h = 1; h <= 6; ++h) peaks.push_back({440.0 * h, -20.0, 0.0});
  const auto without = twm_f0(peaks, 120.0, 1200.0, std::nullopt, 5.0);
  const auto near_prev = twm_f0(peaks, 120.0, 1200.0, 441.0, 5.0);
  const auto far_prev = twm_f0(peaks, 120.0, 1200.0, 1000.0, 5.0);
  REQUIRE(without.has_value());
  REQUIRE(near_prev.has_value());
  REQUIRE(far_prev.has_value());
  REQUIRE(*near_prev == Catch::Approx(*without).margin(1e-9));
  REQUIRE(*far_prev == Catch::Approx(*without).margin(1e-9));
}

TEST_CASE("twm tracks randomized series with jitter and dropped fundamentals") {
  Rng rng(2026);
  int hits = 0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) {
    const double f0 = rng.uniform(140.0, 1100.0);
    const int partials = 3 + int(rng.bounded(10));
    const bool drop = partials >= 5 && rng.uniform01() < 0.2;
    std::vector<Peak> peaks;
    for (int h = 1; h <= partials; ++h) {
      if (drop && h == 1) continue;
      const double jitter = 1.0 + rng.uniform(-0.001, 0.001);
      peaks.push_back({f0 * h * jitter, rng.uniform(-40.0, -10.0), 0.0});
    }
    const auto est = twm_f0(peaks, 120.0, 1200.0, std::nullopt, 10.0);
    if (est && std::abs(*est - f0) / f0 < 0.005) ++hits;
  }
  REQUIRE(hits >= trials * 99 / 100);
}
