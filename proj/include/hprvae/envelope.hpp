#pragma once

// Spectral envelope extraction. Harmonic and residual magnitudes are reduced
// to low-order cepstral coefficients by fitting a truncated cosine basis in
// dB, iteratively lifted so the curve rides the upper envelope of the
// samples (valleys between harmonics are ignored instead of averaged into).

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <span>
#include <vector>

#include "hprvae/common.hpp"
#include "hprvae/hpr.hpp"

namespace hprvae {

// Magnitude samples at explicit frequencies, both in analysis units
// (freqs in Hz within [0, Nyquist], mags in dB at or above the floor).
struct SampledSpectrum {
  std::vector<double> freqs_hz;
  std::vector<double> mags_db;

  void validate(double sample_rate_hz) const {
    if (freqs_hz.size() != mags_db.size())
      throw std::invalid_argument("SampledSpectrum: size mismatch");
    for (double f : freqs_hz)
      if (!(f >= 0.0) || f > sample_rate_hz / 2.0)
        throw std::invalid_argument("SampledSpectrum: frequency outside [0, Nyquist]");
  }
};

// Cosine-basis envelope in dB over frequency:
//   E(f) = c0 + 2 * sum_{k=1..K} c_k cos(2 pi k f / fs).
struct CepstralEnvelope {
  std::vector<double> coeffs;  // c0..cK

  int order() const { return int(coeffs.size()) - 1; }
};

// Envelope values at the given frequencies.
inline std::vector<double> envelope_eval(const CepstralEnvelope& env,
                                         std::span<const double> freqs_hz,
                                         double sample_rate_hz) {
  if (env.coeffs.empty()) throw std::invalid_argument("envelope_eval: empty envelope");
  std::vector<double> out(freqs_hz.size(), 0.0);
  for (std::size_t i = 0; i < freqs_hz.size(); ++i) {
    double v = env.coeffs[0];
    for (std::size_t k = 1; k < env.coeffs.size(); ++k)
      v += 2.0 * env.coeffs[k] * std::cos(kTwoPi * double(k) * freqs_hz[i] / sample_rate_hz);
    out[i] = v;
  }
  return out;
}

// Residual magnitudes picked at the bins nearest to multiples of step_hz,
// from DC up to Nyquist.
inline SampledSpectrum subsample_residual(std::span<const double> res_mag_db,
                                          double step_hz, double sample_rate_hz) {
  if (res_mag_db.size() < 2) throw std::invalid_argument("subsample_residual: too few bins");
  if (!(step_hz > 0.0)) throw std::invalid_argument("subsample_residual: step must be positive");
  const std::size_t half = res_mag_db.size() - 1;
  const int n = int(2 * half);
  const double bin_hz = sample_rate_hz / double(n);
  SampledSpectrum out;
  for (int j = 0;; ++j) {
    const double target = step_hz * double(j);
    if (target > sample_rate_hz / 2.0) break;
    const std::size_t k = std::size_t(std::llround(target / bin_hz));
    if (k > half) break;
    out.freqs_hz.push_back(double(k) * bin_hz);
    out.mags_db.push_back(res_mag_db[k]);
  }
  return out;
}

// Harmonic magnitudes at their measured frequencies; floored slots are kept
// so the fit sees the full series.
inline SampledSpectrum harmonic_samples(const HarmonicFrame& hf) {
  SampledSpectrum out;
  out.freqs_hz = hf.freqs_hz;
  out.mags_db = hf.mags_db;
  return out;
}

// Cosine order for the harmonic envelope of a note at f0: one basis function
// per resolvable harmonic, clamped to [8, 59] so the padded coefficient
// vector always holds kHarmonicWidth values.
inline int choose_K_harmonic(double f0_hz, double sample_rate_hz) {
  if (!(f0_hz > 0.0) || f0_hz >= sample_rate_hz / 2.0)
    throw std::invalid_argument("choose_K_harmonic: f0 outside (0, Nyquist)");
  const int raw = int(std::floor(sample_rate_hz / (2.0 * f0_hz)));
  return std::clamp(raw, 8, kHarmonicWidth - 1);
}

struct TaeResult {
  CepstralEnvelope envelope;
  int iterations = 0;
  // Largest amount any sample still pokes above the fit, per iteration.
  std::vector<double> violation_trace;
};

// Ridge strength for the envelope fit, relative to the squared top singular
// value of the centered basis. Harmonic grids that stop well short of Nyquist
// leave the high-order cosines nearly invisible to the fit; unregularized
// least squares then blows the coefficients up by many orders of magnitude.
// The constant term is exempt so flat data is still reproduced exactly.
inline constexpr double kTaeRidgeRel = 1e-3;

// True-amplitude-envelope fit: ridge-stabilized least-squares cosine fit,
// then repeatedly replace the working samples with max(sample, fit) until no
// sample exceeds the fit by more than tol_db. The fitted curve therefore
// lies within tol_db of an upper envelope of the input.
inline TaeResult tae_fit(const SampledSpectrum& samples, int order,
                         double sample_rate_hz, double tol_db = 2.0,
                         int max_iters = 100) {
  const std::size_t m = samples.freqs_hz.size();
  if (m == 0) throw std::invalid_argument("tae_fit: no samples");
  if (order < 0) throw std::invalid_argument("tae_fit: negative order");
  if (!(tol_db > 0.0)) throw std::invalid_argument("tae_fit: tolerance must be positive");
  if (max_iters < 1) throw std::invalid_argument("tae_fit: need at least one iteration");
  if (m == 1) {
    // Degenerate fit: a constant through the lone sample.
    TaeResult res;
    res.envelope.coeffs.assign(std::size_t(order) + 1, 0.0);
    res.envelope.coeffs[0] = samples.mags_db[0];
    res.iterations = 1;
    res.violation_trace.push_back(0.0);
    return res;
  }

  // Basis matrix over the fixed frequencies; decompose once, reuse per pass.
  // The cosine block is centered so the intercept can be solved exactly and
  // the ridge penalty never shrinks the overall level.
  Eigen::MatrixXd cosines(m, std::size_t(order));
  for (std::size_t i = 0; i < m; ++i)
    for (int k = 1; k <= order; ++k)
      cosines(Eigen::Index(i), k - 1) =
          2.0 * std::cos(kTwoPi * double(k) * samples.freqs_hz[i] / sample_rate_hz);
  const Eigen::RowVectorXd col_means =
      order > 0 ? Eigen::RowVectorXd(cosines.colwise().mean())
                : Eigen::RowVectorXd();
  const Eigen::MatrixXd centered = cosines.rowwise() - col_means;

  Eigen::BDCSVD<Eigen::MatrixXd> svd;
  Eigen::VectorXd gains;
  if (order > 0) {
    svd.compute(centered, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& sv = svd.singularValues();
    gains.resize(sv.size());
    if (sv(0) > 0.0) {
      const double lam = kTaeRidgeRel * sv(0) * sv(0);
      for (Eigen::Index i = 0; i < sv.size(); ++i)
        gains(i) = sv(i) / (sv(i) * sv(i) + lam);
    } else {
      gains.setZero();
    }
  }

  Eigen::VectorXd work(m);
  for (std::size_t i = 0; i < m; ++i) work(Eigen::Index(i)) = samples.mags_db[i];

  TaeResult res;
  Eigen::VectorXd coeffs(std::size_t(order) + 1);
  for (int iter = 0; iter < max_iters; ++iter) {
    const double work_mean = work.mean();
    if (order > 0) {
      const Eigen::VectorXd ck =
          svd.matrixV() *
          (gains.asDiagonal() * (svd.matrixU().transpose() * (work.array() - work_mean).matrix()));
      coeffs(0) = (work - cosines * ck).mean();
      coeffs.tail(order) = ck;
    } else {
      coeffs(0) = work_mean;
    }
    const Eigen::VectorXd fit =
        Eigen::VectorXd::Constant(Eigen::Index(m), coeffs(0)) +
        (order > 0 ? Eigen::VectorXd(cosines * coeffs.tail(order))
                   : Eigen::VectorXd::Zero(Eigen::Index(m)));
    double worst = 0.0;
    for (Eigen::Index i = 0; i < fit.size(); ++i) {
      const double excess = work(i) - fit(i);
      worst = std::max(worst, excess);
      work(i) = std::max(work(i), fit(i));
    }
    res.violation_trace.push_back(worst);
    res.iterations = iter + 1;
    if (worst <= tol_db) break;
  }

  res.envelope.coeffs.assign(coeffs.data(), coeffs.data() + coeffs.size());
  return res;
}

// Zero-pad (or reject oversize) a coefficient vector to a fixed width.
inline std::vector<double> pad_coeffs(const CepstralEnvelope& env, int width) {
  if (int(env.coeffs.size()) > width)
    throw std::invalid_argument("pad_coeffs: envelope wider than target");
  std::vector<double> out(std::size_t(width), 0.0);
  std::copy(env.coeffs.begin(), env.coeffs.end(), out.begin());
  return out;
}

}  // namespace hprvae
