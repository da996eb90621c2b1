#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "hprvae/common.hpp"
#include "hprvae/rng.hpp"

namespace hprvae {

// Batches are column-major: one column per sample, D rows of features.

struct DenseLayer {
  Eigen::MatrixXd W;  // out x in
  Eigen::VectorXd b;  // out
};

struct Mlp {
  std::vector<DenseLayer> layers;
  double leaky_slope = 0.1;

  int input_dim() const { return layers.empty() ? 0 : int(layers.front().W.cols()); }
  int output_dim() const { return layers.empty() ? 0 : int(layers.back().W.rows()); }
};

// Xavier-normal weights, zero biases. dims = {in, h1, ..., out}.
inline Mlp make_mlp(const std::vector<int>& dims, double leaky_slope, Rng& rng) {
  if (dims.size() < 2) throw std::invalid_argument("make_mlp: need at least two dims");
  Mlp mlp;
  mlp.leaky_slope = leaky_slope;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int in = dims[l];
    const int out = dims[l + 1];
    if (in < 1 || out < 1) throw std::invalid_argument("make_mlp: dims must be positive");
    DenseLayer layer;
    layer.W.resize(out, in);
    const double std_dev = std::sqrt(2.0 / double(in + out));
    for (int j = 0; j < in; ++j)
      for (int i = 0; i < out; ++i) layer.W(i, j) = std_dev * rng.normal();
    layer.b = Eigen::VectorXd::Zero(out);
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

inline Eigen::MatrixXd leaky_relu(const Eigen::MatrixXd& z, double slope) {
  return z.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
}

inline Eigen::MatrixXd leaky_relu_grad(const Eigen::MatrixXd& z, double slope) {
  return z.unaryExpr([slope](double v) { return v > 0.0 ? 1.0 : slope; });
}

// as[0] is the input; zs[l] / as[l+1] are layer l's pre/post activations.
struct MlpCache {
  std::vector<Eigen::MatrixXd> zs;
  std::vector<Eigen::MatrixXd> as;
};

// Hidden layers use leaky ReLU; the last layer is linear.
inline Eigen::MatrixXd mlp_forward(const Mlp& mlp, const Eigen::MatrixXd& x,
                                   MlpCache* cache = nullptr) {
  if (mlp.layers.empty()) throw std::invalid_argument("mlp_forward: empty network");
  if (int(x.rows()) != mlp.input_dim())
    throw std::invalid_argument("mlp_forward: input has " + std::to_string(x.rows()) +
                                " rows, expected " + std::to_string(mlp.input_dim()));
  if (cache) {
    cache->zs.clear();
    cache->as.clear();
    cache->as.push_back(x);
  }
  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    Eigen::MatrixXd z = (mlp.layers[l].W * a).colwise() + mlp.layers[l].b;
    const bool last = (l + 1 == mlp.layers.size());
    a = last ? z : leaky_relu(z, mlp.leaky_slope);
    if (cache) {
      cache->zs.push_back(std::move(z));
      cache->as.push_back(a);
    }
  }
  return a;
}

struct MlpGrads {
  std::vector<DenseLayer> layers;  // same shapes as the network
};

inline MlpGrads zero_grads(const Mlp& mlp) {
  MlpGrads g;
  for (const auto& layer : mlp.layers)
    g.layers.push_back({Eigen::MatrixXd::Zero(layer.W.rows(), layer.W.cols()),
                        Eigen::VectorXd::Zero(layer.b.size())});
  return g;
}

// dy is the loss gradient wrt the network output. Returns the gradient wrt
// the input; parameter gradients are accumulated into *grads (pre-zeroed by
// the caller or fresh from zero_grads).
inline Eigen::MatrixXd mlp_backward(const Mlp& mlp, const MlpCache& cache,
                                    const Eigen::MatrixXd& dy, MlpGrads* grads) {
  const std::size_t n = mlp.layers.size();
  if (cache.zs.size() != n || cache.as.size() != n + 1)
    throw std::invalid_argument("mlp_backward: cache does not match network");
  if (!grads || grads->layers.size() != n)
    throw std::invalid_argument("mlp_backward: grads not sized for network");
  Eigen::MatrixXd dz = dy;  // last layer is linear
  for (std::size_t l = n; l-- > 0;) {
    if (l + 1 < n)
      dz = dz.cwiseProduct(leaky_relu_grad(cache.zs[l], mlp.leaky_slope));
    grads->layers[l].W += dz * cache.as[l].transpose();
    grads->layers[l].b += dz.rowwise().sum();
    dz = (mlp.layers[l].W.transpose() * dz).eval();
  }
  return dz;
}

// ---------------------------------------------------------------------------
// Conditional VAE: encoder [x; c] -> [mu; logvar], z = mu + exp(logvar/2) * eps,
// decoder [z; c] -> xhat. The condition block may be empty (0 rows).

struct Vae {
  Mlp encoder;
  Mlp decoder;
  int latent_dim = 0;

  int cond_dim() const { return decoder.input_dim() - latent_dim; }
  int data_dim() const { return encoder.input_dim() - cond_dim(); }
};

// hidden = encoder hidden widths, mirrored in the decoder.
inline Vae make_vae(int data_dim, int cond_dim, const std::vector<int>& hidden,
                    int latent_dim, double leaky_slope, Rng& rng) {
  if (data_dim < 1 || cond_dim < 0 || latent_dim < 1)
    throw std::invalid_argument("make_vae: bad dimensions");
  std::vector<int> enc_dims{data_dim + cond_dim};
  enc_dims.insert(enc_dims.end(), hidden.begin(), hidden.end());
  enc_dims.push_back(2 * latent_dim);
  std::vector<int> dec_dims{latent_dim + cond_dim};
  dec_dims.insert(dec_dims.end(), hidden.rbegin(), hidden.rend());
  dec_dims.push_back(data_dim);
  Vae vae;
  vae.encoder = make_mlp(enc_dims, leaky_slope, rng);
  vae.decoder = make_mlp(dec_dims, leaky_slope, rng);
  vae.latent_dim = latent_dim;
  return vae;
}

inline Eigen::MatrixXd vstack(const Eigen::MatrixXd& top, const Eigen::MatrixXd& bottom) {
  if (bottom.rows() == 0) return top;
  if (top.cols() != bottom.cols())
    throw std::invalid_argument("vstack: column counts differ");
  Eigen::MatrixXd out(top.rows() + bottom.rows(), top.cols());
  out.topRows(top.rows()) = top;
  out.bottomRows(bottom.rows()) = bottom;
  return out;
}

struct VaeCache {
  MlpCache enc;
  MlpCache dec;
  Eigen::MatrixXd x, cond, mu, logvar, eps, z, xhat;
};

// eps must be latent_dim x batch; passing it in keeps sampling outside the
// math so gradients can be checked against finite differences exactly.
inline Eigen::MatrixXd vae_forward(const Vae& vae, const Eigen::MatrixXd& x,
                                   const Eigen::MatrixXd& cond, const Eigen::MatrixXd& eps,
                                   VaeCache* cache = nullptr) {
  const int k = vae.latent_dim;
  if (eps.rows() != k || eps.cols() != x.cols())
    throw std::invalid_argument("vae_forward: eps must be latent_dim x batch");
  if (cond.rows() != vae.cond_dim())
    throw std::invalid_argument("vae_forward: condition rows mismatch");
  VaeCache local;
  VaeCache& c = cache ? *cache : local;
  c.x = x;
  c.cond = cond;
  c.eps = eps;
  const Eigen::MatrixXd stats = mlp_forward(vae.encoder, vstack(x, cond), &c.enc);
  c.mu = stats.topRows(k);
  c.logvar = stats.bottomRows(k);
  c.z = c.mu + (0.5 * c.logvar).array().exp().matrix().cwiseProduct(eps);
  c.xhat = mlp_forward(vae.decoder, vstack(c.z, cond), &c.dec);
  return c.xhat;
}

inline Eigen::MatrixXd sample_eps(int latent_dim, int batch, Rng& rng) {
  Eigen::MatrixXd eps(latent_dim, batch);
  for (int j = 0; j < batch; ++j)
    for (int i = 0; i < latent_dim; ++i) eps(i, j) = rng.normal();
  return eps;
}

struct VaeLoss {
  double total = 0.0;
  double recon = 0.0;  // mean squared error over batch x features
  double kl = 0.0;     // KL(q || N(0,I)) averaged over the batch
};

inline VaeLoss vae_loss(const Eigen::MatrixXd& x, const Eigen::MatrixXd& xhat,
                        const Eigen::MatrixXd& mu, const Eigen::MatrixXd& logvar,
                        double beta) {
  const double bd = double(x.rows()) * double(x.cols());
  VaeLoss loss;
  loss.recon = (xhat - x).squaredNorm() / bd;
  loss.kl = 0.5 *
            (mu.array().square() + logvar.array().exp() - logvar.array() - 1.0).sum() /
            double(x.cols());
  loss.total = loss.recon + beta * loss.kl;
  return loss;
}

struct VaeGrads {
  MlpGrads encoder;
  MlpGrads decoder;
};

inline VaeGrads zero_grads(const Vae& vae) {
  return {zero_grads(vae.encoder), zero_grads(vae.decoder)};
}

// Backpropagates d(total loss)/d(params) for the loss above.
inline void vae_backward(const Vae& vae, const VaeCache& cache, double beta,
                         VaeGrads* grads) {
  const int k = vae.latent_dim;
  const double batch = double(cache.x.cols());
  const double bd = double(cache.x.rows()) * batch;

  const Eigen::MatrixXd dxhat = 2.0 * (cache.xhat - cache.x) / bd;
  const Eigen::MatrixXd ddec_in = mlp_backward(vae.decoder, cache.dec, dxhat, &grads->decoder);
  const Eigen::MatrixXd dz = ddec_in.topRows(k);

  const Eigen::MatrixXd half_std_eps =
      (0.5 * cache.logvar).array().exp().matrix().cwiseProduct(cache.eps) * 0.5;
  Eigen::MatrixXd dmu = dz + beta * cache.mu / batch;
  Eigen::MatrixXd dlogvar = dz.cwiseProduct(half_std_eps) +
                            beta * 0.5 * (cache.logvar.array().exp() - 1.0).matrix() / batch;
  mlp_backward(vae.encoder, cache.enc, vstack(dmu, dlogvar), &grads->encoder);
}

// Posterior statistics without sampling; mu is the deterministic embedding.
inline void encode_stats(const Vae& vae, const Eigen::MatrixXd& x,
                         const Eigen::MatrixXd& cond, Eigen::MatrixXd* mu,
                         Eigen::MatrixXd* logvar) {
  const Eigen::MatrixXd stats = mlp_forward(vae.encoder, vstack(x, cond), nullptr);
  if (mu) *mu = stats.topRows(vae.latent_dim);
  if (logvar) *logvar = stats.bottomRows(vae.latent_dim);
}

inline Eigen::MatrixXd decode(const Vae& vae, const Eigen::MatrixXd& z,
                              const Eigen::MatrixXd& cond) {
  return mlp_forward(vae.decoder, vstack(z, cond), nullptr);
}

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<DenseLayer> m;  // first moments, same shapes as the parameters
  std::vector<DenseLayer> v;  // second moments
  long t = 0;
};

inline AdamState make_adam_state(const Mlp& mlp) {
  AdamState s;
  for (const auto& layer : mlp.layers) {
    s.m.push_back({Eigen::MatrixXd::Zero(layer.W.rows(), layer.W.cols()),
                   Eigen::VectorXd::Zero(layer.b.size())});
    s.v.push_back({Eigen::MatrixXd::Zero(layer.W.rows(), layer.W.cols()),
                   Eigen::VectorXd::Zero(layer.b.size())});
  }
  return s;
}

inline void adam_step(Mlp& mlp, const MlpGrads& grads, AdamState& state,
                      const AdamConfig& cfg) {
  if (grads.layers.size() != mlp.layers.size() || state.m.size() != mlp.layers.size())
    throw std::invalid_argument("adam_step: shape mismatch");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.t));
  auto update = [&](auto& theta, const auto& g, auto& m, auto& v) {
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    theta.array() -= cfg.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.eps);
  };
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    update(mlp.layers[l].W, grads.layers[l].W, state.m[l].W, state.v[l].W);
    update(mlp.layers[l].b, grads.layers[l].b, state.m[l].b, state.v[l].b);
  }
}

// ---------------------------------------------------------------------------
// Checkpointing: a small versioned binary format. All numeric fields are
// little-endian; doubles are written raw, so save -> load -> save is
// byte-identical.

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
  put_u32(out, std::uint32_t(v));
  put_u32(out, std::uint32_t(v >> 32));
}

inline void put_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

inline std::uint32_t get_u32(std::istream& in, const std::string& what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw DataError("checkpoint: truncated while reading " + what);
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
         (std::uint32_t(b[3]) << 24);
}

inline std::uint64_t get_u64(std::istream& in, const std::string& what) {
  const std::uint64_t lo = get_u32(in, what);
  const std::uint64_t hi = get_u32(in, what);
  return lo | (hi << 32);
}

inline double get_f64(std::istream& in, const std::string& what) {
  const std::uint64_t bits = get_u64(in, what);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

inline void put_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  put_u32(out, std::uint32_t(m.rows()));
  put_u32(out, std::uint32_t(m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) put_f64(out, m(i, j));
}

inline Eigen::MatrixXd get_matrix(std::istream& in, const std::string& what) {
  const std::uint32_t rows = get_u32(in, what);
  const std::uint32_t cols = get_u32(in, what);
  if (rows > (1u << 20) || cols > (1u << 20))
    throw DataError("checkpoint: implausible matrix shape in " + what);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = get_f64(in, what);
  return m;
}

inline void put_mlp(std::ostream& out, const Mlp& mlp) {
  put_f64(out, mlp.leaky_slope);
  put_u32(out, std::uint32_t(mlp.layers.size()));
  for (const auto& layer : mlp.layers) {
    put_matrix(out, layer.W);
    put_matrix(out, layer.b);
  }
}

inline Mlp get_mlp(std::istream& in, const std::string& what) {
  Mlp mlp;
  mlp.leaky_slope = get_f64(in, what);
  const std::uint32_t n = get_u32(in, what);
  if (n > 64) throw DataError("checkpoint: implausible layer count in " + what);
  for (std::uint32_t l = 0; l < n; ++l) {
    DenseLayer layer;
    layer.W = get_matrix(in, what);
    layer.b = get_matrix(in, what);
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

inline constexpr std::uint32_t kCheckpointMagic = 0x56525048;  // "HPRV"
inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace detail

struct TrainCheckpoint {
  Vae vae;
  AdamState adam_enc;
  AdamState adam_dec;
  std::array<std::uint64_t, 4> rng_state{};
  std::uint64_t epoch = 0;
};

inline void save_checkpoint(std::ostream& out, const TrainCheckpoint& ckpt) {
  using namespace detail;
  put_u32(out, kCheckpointMagic);
  put_u32(out, kCheckpointVersion);
  put_u32(out, std::uint32_t(ckpt.vae.latent_dim));
  put_mlp(out, ckpt.vae.encoder);
  put_mlp(out, ckpt.vae.decoder);
  auto put_adam = [&](const AdamState& s) {
    put_u64(out, std::uint64_t(s.t));
    put_u32(out, std::uint32_t(s.m.size()));
    for (std::size_t l = 0; l < s.m.size(); ++l) {
      put_matrix(out, s.m[l].W);
      put_matrix(out, s.m[l].b);
      put_matrix(out, s.v[l].W);
      put_matrix(out, s.v[l].b);
    }
  };
  put_adam(ckpt.adam_enc);
  put_adam(ckpt.adam_dec);
  for (auto w : ckpt.rng_state) put_u64(out, w);
  put_u64(out, ckpt.epoch);
  if (!out) throw DataError("checkpoint: write failed");
}

inline TrainCheckpoint load_checkpoint(std::istream& in) {
  using namespace detail;
  if (get_u32(in, "magic") != kCheckpointMagic)
    throw DataError("checkpoint: bad magic");
  if (get_u32(in, "version") != kCheckpointVersion)
    throw DataError("checkpoint: unsupported version");
  TrainCheckpoint ckpt;
  ckpt.vae.latent_dim = int(get_u32(in, "latent_dim"));
  ckpt.vae.encoder = get_mlp(in, "encoder");
  ckpt.vae.decoder = get_mlp(in, "decoder");
  auto get_adam = [&](const std::string& what) {
    AdamState s;
    s.t = long(get_u64(in, what));
    const std::uint32_t n = get_u32(in, what);
    if (n > 64) throw DataError("checkpoint: implausible optimizer size");
    for (std::uint32_t l = 0; l < n; ++l) {
      DenseLayer m, v;
      m.W = get_matrix(in, what);
      m.b = get_matrix(in, what);
      v.W = get_matrix(in, what);
      v.b = get_matrix(in, what);
      s.m.push_back(std::move(m));
      s.v.push_back(std::move(v));
    }
    return s;
  };
  ckpt.adam_enc = get_adam("adam_enc");
  ckpt.adam_dec = get_adam("adam_dec");
  for (auto& w : ckpt.rng_state) w = get_u64(in, "rng_state");
  ckpt.epoch = get_u64(in, "epoch");
  return ckpt;
}

inline void save_checkpoint_file(const std::string& path, const TrainCheckpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("checkpoint: cannot open for writing: " + path);
  save_checkpoint(out, ckpt);
}

inline TrainCheckpoint load_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open: " + path);
  return load_checkpoint(in);
}

}  // namespace hprvae
