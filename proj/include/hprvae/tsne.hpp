#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "hprvae/common.hpp"
#include "hprvae/rng.hpp"

namespace hprvae {

struct TsneParams {
  double perplexity = 30.0;
  int iters = 1000;
  double exaggeration = 12.0;
  int exaggeration_iters = 250;
  double learning_rate = 200.0;
  double momentum_initial = 0.5;
  double momentum_final = 0.8;
  int momentum_switch_iter = 250;
  std::uint64_t seed = 1;
};

struct TsneResult {
  Eigen::MatrixXd y;            // 2 x n embedding
  std::vector<double> kl_trace; // objective per iteration
};

namespace detail {

// Row-stochastic affinities with per-point bandwidth tuned by bisection so
// each row's entropy matches log(perplexity).
inline Eigen::MatrixXd tsne_affinities(const Eigen::MatrixXd& d2, double perplexity) {
  const Eigen::Index n = d2.rows();
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  const double target = std::log(perplexity);
  for (Eigen::Index i = 0; i < n; ++i) {
    double beta = 1.0;
    double beta_min = -std::numeric_limits<double>::infinity();
    double beta_max = std::numeric_limits<double>::infinity();
    Eigen::VectorXd row(n);
    for (int iter = 0; iter < 200; ++iter) {
      double sum = 0.0;
      double weighted = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        const double v = (j == i) ? 0.0 : std::exp(-beta * d2(i, j));
        row(j) = v;
        sum += v;
        weighted += v * d2(i, j);
      }
      if (sum <= 0.0) sum = std::numeric_limits<double>::min();
      const double h = std::log(sum) + beta * weighted / sum;
      const double diff = h - target;
      if (std::abs(diff) < 1e-5) break;
      if (diff > 0.0) {
        beta_min = beta;
        beta = std::isinf(beta_max) ? beta * 2.0 : (beta + beta_max) / 2.0;
      } else {
        beta_max = beta;
        beta = std::isinf(beta_min) ? beta / 2.0 : (beta + beta_min) / 2.0;
      }
    }
    double sum = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double v = (j == i) ? 0.0 : std::exp(-beta * d2(i, j));
      row(j) = v;
      sum += v;
    }
    if (sum <= 0.0) sum = std::numeric_limits<double>::min();
    p.row(i) = row.transpose() / sum;
  }
  return p;
}

inline Eigen::MatrixXd pairwise_sq_dists(const Eigen::MatrixXd& x) {
  const Eigen::VectorXd sq = x.colwise().squaredNorm();
  Eigen::MatrixXd d2 = (-2.0 * x.transpose() * x).colwise() + sq;
  d2.rowwise() += sq.transpose();
  return d2.cwiseMax(0.0);
}

}  // namespace detail

// Exact (quadratic-cost) t-SNE of column points into 2-D with early
// exaggeration, adaptive per-parameter gains, and momentum. Deterministic
// given params.seed.
inline TsneResult tsne_embed(const Eigen::MatrixXd& points, const TsneParams& params = {}) {
  const Eigen::Index n = points.cols();
  if (!(params.perplexity > 1.0)) throw std::invalid_argument("tsne: perplexity must be > 1");
  if (double(n) < 3.0 * params.perplexity)
    throw std::invalid_argument("tsne: need at least 3*perplexity points");
  if (params.iters < 1) throw std::invalid_argument("tsne: iters must be positive");

  // Symmetrized, normalized affinities of the high-dimensional points.
  const Eigen::MatrixXd d2 = detail::pairwise_sq_dists(points);
  Eigen::MatrixXd p = detail::tsne_affinities(d2, params.perplexity);
  p = (p + p.transpose()).eval();
  p /= p.sum();
  p = p.cwiseMax(1e-12);
  p.diagonal().setZero();

  Rng rng(derive_seed(params.seed, 0x75e11));
  Eigen::MatrixXd y(2, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < 2; ++i) y(i, j) = 1e-4 * rng.normal();

  Eigen::MatrixXd inc = Eigen::MatrixXd::Zero(2, n);
  Eigen::MatrixXd gains = Eigen::MatrixXd::Ones(2, n);

  TsneResult result;
  for (int iter = 0; iter < params.iters; ++iter) {
    const double exag = iter < params.exaggeration_iters ? params.exaggeration : 1.0;
    const double momentum =
        iter < params.momentum_switch_iter ? params.momentum_initial : params.momentum_final;

    // Student-t kernel in the embedding.
    const Eigen::MatrixXd yd2 = detail::pairwise_sq_dists(y);
    Eigen::MatrixXd qz = (1.0 + yd2.array()).inverse().matrix();
    qz.diagonal().setZero();
    const double z = qz.sum();

    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(2, n);
    double kl = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i == j) continue;
        const double qij = std::max(qz(i, j) / z, 1e-12);
        const double mult = 4.0 * (exag * p(i, j) - qij) * qz(i, j);
        grad.col(i) += mult * (y.col(i) - y.col(j));
        // objective uses the true affinities even while the gradient is
        // exaggerated, so the trace stays comparable across the whole run
        kl += p(i, j) > 0.0 ? p(i, j) * std::log(p(i, j) / qij) : 0.0;
      }
    }

    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < 2; ++i) {
        const bool same_sign = (grad(i, j) > 0.0) == (inc(i, j) > 0.0);
        gains(i, j) = same_sign ? std::max(gains(i, j) * 0.8, 0.01) : gains(i, j) + 0.2;
        inc(i, j) = momentum * inc(i, j) - params.learning_rate * gains(i, j) * grad(i, j);
      }
    y += inc;
    y.colwise() -= y.rowwise().mean().eval();

    result.kl_trace.push_back(kl);
  }
  result.y = y;
  return result;
}

// Mean silhouette of 2-D (or any-dimensional) column points under integer
// labels, with Euclidean distances. Points whose cluster is a singleton
// score 0. Clusters are index lists so the pairwise pass is cache-friendly.
inline double mean_silhouette(const Eigen::MatrixXd& points, std::span<const int> labels) {
  const Eigen::Index n = points.cols();
  if (std::size_t(n) != labels.size())
    throw std::invalid_argument("mean_silhouette: one label per point required");
  if (n < 2) throw std::invalid_argument("mean_silhouette: need at least two points");

  std::vector<int> uniq(labels.begin(), labels.end());
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  if (uniq.size() < 2) throw std::invalid_argument("mean_silhouette: need at least two clusters");
  std::vector<std::vector<Eigen::Index>> members(uniq.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto it = std::lower_bound(uniq.begin(), uniq.end(), labels[std::size_t(i)]);
    members[std::size_t(it - uniq.begin())].push_back(i);
  }

  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto it = std::lower_bound(uniq.begin(), uniq.end(), labels[std::size_t(i)]);
    const std::size_t own = std::size_t(it - uniq.begin());
    if (members[own].size() < 2) continue;  // silhouette 0 for singletons

    double a = 0.0;
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < members.size(); ++c) {
      double sum = 0.0;
      for (const auto j : members[c])
        if (j != i) sum += (points.col(i) - points.col(j)).norm();
      if (c == own) {
        a = sum / double(members[c].size() - 1);
      } else if (!members[c].empty()) {
        b = std::min(b, sum / double(members[c].size()));
      }
    }
    const double denom = std::max(a, b);
    total += denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return total / double(n);
}

}  // namespace hprvae
