#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hprvae/common.hpp"
#include "hprvae/dataset.hpp"
#include "hprvae/features.hpp"
#include "hprvae/nn.hpp"
#include "hprvae/rng.hpp"

namespace hprvae {

enum class ArchKind { inet, concat, jnet };

inline const char* to_string(ArchKind k) {
  switch (k) {
    case ArchKind::inet: return "inet";
    case ArchKind::concat: return "concat";
    case ArchKind::jnet: return "jnet";
  }
  return "?";
}

inline ArchKind arch_kind_from_string(const std::string& s) {
  if (s == "inet") return ArchKind::inet;
  if (s == "concat") return ArchKind::concat;
  if (s == "jnet") return ArchKind::jnet;
  throw DataError("unknown architecture: " + s);
}

struct ArchSpec {
  ArchKind kind = ArchKind::inet;
  bool condition_on_f0 = true;
  // Feed the pitch code to the residual stream too (study toggle; the
  // residual is modeled unconditioned by default).
  bool condition_residual = false;
  int latent_dim = 32;
  double beta = 1e-3;
  int epochs = 2000;
  int batch_size = 512;
  double lr = 1e-3;
  std::vector<int> hidden{64, 48};
  double leaky_slope = 0.1;
  // Range of the normalized log-pitch code.
  double f0_min_hz = 120.0;
  double f0_max_hz = 1200.0;

  int stream_count() const { return kind == ArchKind::concat ? 1 : 2; }

  std::vector<std::string> stream_names() const {
    switch (kind) {
      case ArchKind::inet: return {"harmonic", "residual"};
      case ArchKind::concat: return {"concat"};
      case ArchKind::jnet: return {"sum", "diff"};
    }
    return {};
  }

  void validate() const {
    if (latent_dim < 1 || epochs < 1 || batch_size < 1)
      throw std::invalid_argument("ArchSpec: latent/epochs/batch must be positive");
    if (!(lr > 0.0) || beta < 0.0)
      throw std::invalid_argument("ArchSpec: bad lr or beta");
    if (!(f0_min_hz > 0.0) || !(f0_max_hz > f0_min_hz))
      throw std::invalid_argument("ArchSpec: bad f0 range");
    if (hidden.empty()) throw std::invalid_argument("ArchSpec: need hidden layers");
  }
};

// Pitch mapped to [0, 1] by log position inside the configured range.
inline double f0_condition_value(double f0_hz, double f0_min_hz, double f0_max_hz) {
  const double t = std::log2(f0_hz / f0_min_hz) / std::log2(f0_max_hz / f0_min_hz);
  return std::clamp(t, 0.0, 1.0);
}

// Per-feature standardization computed on the training split.
struct NormStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd std_dev;  // floored at 1e-6 so constants stay finite
};

inline NormStats compute_norm_stats(const Eigen::MatrixXd& x) {
  if (x.cols() < 1) throw std::invalid_argument("compute_norm_stats: empty data");
  NormStats s;
  s.mean = x.rowwise().mean();
  const Eigen::MatrixXd centered = x.colwise() - s.mean;
  s.std_dev = (centered.array().square().rowwise().sum() / double(x.cols()))
                  .sqrt()
                  .max(1e-6)
                  .matrix();
  return s;
}

inline Eigen::MatrixXd normalize(const Eigen::MatrixXd& x, const NormStats& s) {
  return (x.colwise() - s.mean).array().colwise() / s.std_dev.array();
}

inline Eigen::MatrixXd denormalize(const Eigen::MatrixXd& x, const NormStats& s) {
  return (x.array().colwise() * s.std_dev.array()).colwise() + s.mean.array();
}

inline constexpr int kJointWidth = kHarmonicWidth;  // residual padded up to this

// One network's training view of the feature table (columns = frames).
struct StreamInputs {
  Eigen::MatrixXd x;
  Eigen::MatrixXd cond;  // 0 rows when unconditioned
};

// Builds the per-network input matrices for an architecture over all rows.
inline std::vector<StreamInputs> assemble_inputs(const FeatureTable& rows,
                                                 const ArchSpec& arch) {
  arch.validate();
  const int n = int(rows.size());
  Eigen::MatrixXd h(kHarmonicWidth, n), r(kResidualWidth, n);
  Eigen::MatrixXd f0code(1, n);
  for (int j = 0; j < n; ++j) {
    rows[std::size_t(j)].validate();
    for (int i = 0; i < kHarmonicWidth; ++i) h(i, j) = rows[std::size_t(j)].cc_h[std::size_t(i)];
    for (int i = 0; i < kResidualWidth; ++i) r(i, j) = rows[std::size_t(j)].cc_r[std::size_t(i)];
    f0code(0, j) = f0_condition_value(rows[std::size_t(j)].f0_hz, arch.f0_min_hz, arch.f0_max_hz);
  }
  const Eigen::MatrixXd none(0, n);
  const Eigen::MatrixXd& cond = arch.condition_on_f0 ? f0code : none;

  std::vector<StreamInputs> streams;
  switch (arch.kind) {
    case ArchKind::inet: {
      const bool cond_res = arch.condition_on_f0 && arch.condition_residual;
      streams.push_back({h, cond});
      streams.push_back({r, cond_res ? f0code : none});
      break;
    }
    case ArchKind::concat: {
      streams.push_back({vstack(h, r), cond});
      break;
    }
    case ArchKind::jnet: {
      Eigen::MatrixXd rp = Eigen::MatrixXd::Zero(kJointWidth, n);
      rp.topRows(kResidualWidth) = r;
      streams.push_back({h + rp, cond});
      streams.push_back({h - rp, cond});
      break;
    }
  }
  return streams;
}

inline long param_count(const Mlp& mlp) {
  long n = 0;
  for (const auto& layer : mlp.layers) n += long(layer.W.size()) + long(layer.b.size());
  return n;
}

inline long param_count(const Vae& vae) {
  return param_count(vae.encoder) + param_count(vae.decoder);
}

struct LossCurve {
  std::vector<double> train;
  std::vector<double> test;
};

struct TrainedModel {
  ArchSpec arch;
  std::vector<Vae> nets;
  std::vector<NormStats> stats;
  SplitIndices split;
  std::vector<LossCurve> curves;
  std::uint64_t seed = 0;
};

namespace detail {

inline Eigen::MatrixXd select_cols(const Eigen::MatrixXd& x,
                                   const std::vector<std::size_t>& idx) {
  Eigen::MatrixXd out(x.rows(), Eigen::Index(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out.col(Eigen::Index(j)) = x.col(Eigen::Index(idx[j]));
  return out;
}

}  // namespace detail

// Trains all of the architecture's networks. Each network gets its own rng
// stream derived from (seed, stream index), driving weight init, epoch
// shuffling, and reparametrization noise, so runs are reproducible and the
// two networks of INet/JNet are independent. Test loss is evaluated at the
// posterior mean (eps = 0). Throws DivergenceError when a batch loss stops
// being finite.
inline TrainedModel train_model(const FeatureTable& rows, const ArchSpec& arch,
                                const SplitIndices& split, std::uint64_t seed) {
  arch.validate();
  if (split.train.empty()) throw std::invalid_argument("train_model: empty train split");
  const auto streams = assemble_inputs(rows, arch);

  TrainedModel model;
  model.arch = arch;
  model.split = split;
  model.seed = seed;

  for (std::size_t s = 0; s < streams.size(); ++s) {
    const Eigen::MatrixXd x_train = detail::select_cols(streams[s].x, split.train);
    const Eigen::MatrixXd x_test = detail::select_cols(streams[s].x, split.test);
    const bool conditioned = streams[s].cond.rows() > 0;
    const Eigen::MatrixXd c_train =
        conditioned ? detail::select_cols(streams[s].cond, split.train)
                    : Eigen::MatrixXd(0, x_train.cols());
    const Eigen::MatrixXd c_test =
        conditioned ? detail::select_cols(streams[s].cond, split.test)
                    : Eigen::MatrixXd(0, x_test.cols());

    const NormStats stats = compute_norm_stats(x_train);
    const Eigen::MatrixXd xn_train = normalize(x_train, stats);
    const Eigen::MatrixXd xn_test = normalize(x_test, stats);

    Rng rng(derive_seed(seed, std::uint64_t(s)));
    Vae vae = make_vae(int(x_train.rows()), conditioned ? 1 : 0, arch.hidden,
                       arch.latent_dim, arch.leaky_slope, rng);
    AdamState adam_enc = make_adam_state(vae.encoder);
    AdamState adam_dec = make_adam_state(vae.decoder);
    AdamConfig adam_cfg;
    adam_cfg.lr = arch.lr;

    const int n_train = int(xn_train.cols());
    std::vector<std::size_t> order(std::size_t(n_train), 0);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    LossCurve curve;
    for (int epoch = 0; epoch < arch.epochs; ++epoch) {
      rng.shuffle(order);
      double epoch_loss = 0.0;
      for (int lo = 0; lo < n_train; lo += arch.batch_size) {
        const int bs = std::min(arch.batch_size, n_train - lo);
        std::vector<std::size_t> batch_idx(order.begin() + lo, order.begin() + lo + bs);
        const Eigen::MatrixXd xb = detail::select_cols(xn_train, batch_idx);
        const Eigen::MatrixXd cb = conditioned
                                       ? detail::select_cols(c_train, batch_idx)
                                       : Eigen::MatrixXd(0, bs);
        const Eigen::MatrixXd eps = sample_eps(arch.latent_dim, bs, rng);
        VaeCache cache;
        vae_forward(vae, xb, cb, eps, &cache);
        const VaeLoss loss = vae_loss(xb, cache.xhat, cache.mu, cache.logvar, arch.beta);
        if (!std::isfinite(loss.total)) throw DivergenceError(epoch);
        auto grads = zero_grads(vae);
        vae_backward(vae, cache, arch.beta, &grads);
        adam_step(vae.encoder, grads.encoder, adam_enc, adam_cfg);
        adam_step(vae.decoder, grads.decoder, adam_dec, adam_cfg);
        epoch_loss += loss.total * double(bs);
      }
      curve.train.push_back(epoch_loss / double(n_train));

      const Eigen::MatrixXd eps0 = Eigen::MatrixXd::Zero(arch.latent_dim, xn_test.cols());
      VaeCache tc;
      vae_forward(vae, xn_test, c_test, eps0, &tc);
      const VaeLoss tl = vae_loss(xn_test, tc.xhat, tc.mu, tc.logvar, arch.beta);
      if (!std::isfinite(tl.total)) throw DivergenceError(epoch);
      curve.test.push_back(tl.total);
    }

    model.nets.push_back(std::move(vae));
    model.stats.push_back(stats);
    model.curves.push_back(std::move(curve));
  }
  return model;
}

struct Reconstruction {
  Eigen::MatrixXd cc_h;  // kHarmonicWidth x frames
  Eigen::MatrixXd cc_r;  // kResidualWidth x frames
};

// Posterior-mean reconstruction back in raw coefficient space. JNet streams
// recombine as h = (s + d) / 2, r = (s - d) / 2 before truncating the
// residual back to its native width.
inline Reconstruction reconstruct(const TrainedModel& model, const FeatureTable& rows) {
  const auto streams = assemble_inputs(rows, model.arch);
  const int n = int(rows.size());
  std::vector<Eigen::MatrixXd> outs;
  for (std::size_t s = 0; s < streams.size(); ++s) {
    const Eigen::MatrixXd xn = normalize(streams[s].x, model.stats[s]);
    Eigen::MatrixXd mu;
    encode_stats(model.nets[s], xn, streams[s].cond, &mu, nullptr);
    outs.push_back(denormalize(decode(model.nets[s], mu, streams[s].cond), model.stats[s]));
  }

  Reconstruction rec;
  switch (model.arch.kind) {
    case ArchKind::inet:
      rec.cc_h = outs[0];
      rec.cc_r = outs[1];
      break;
    case ArchKind::concat:
      rec.cc_h = outs[0].topRows(kHarmonicWidth);
      rec.cc_r = outs[0].bottomRows(kResidualWidth);
      break;
    case ArchKind::jnet: {
      const Eigen::MatrixXd h = (outs[0] + outs[1]) / 2.0;
      const Eigen::MatrixXd r = (outs[0] - outs[1]) / 2.0;
      rec.cc_h = h;
      rec.cc_r = r.topRows(kResidualWidth);
      break;
    }
  }
  if (rec.cc_h.cols() != n || rec.cc_r.cols() != n)
    throw std::logic_error("reconstruct: column bookkeeping broke");
  return rec;
}

// Per-network posterior means (latent_dim x frames), in stream order.
inline std::vector<Eigen::MatrixXd> latent_codes(const TrainedModel& model,
                                                 const FeatureTable& rows) {
  const auto streams = assemble_inputs(rows, model.arch);
  std::vector<Eigen::MatrixXd> codes;
  for (std::size_t s = 0; s < streams.size(); ++s) {
    const Eigen::MatrixXd xn = normalize(streams[s].x, model.stats[s]);
    Eigen::MatrixXd mu;
    encode_stats(model.nets[s], xn, streams[s].cond, &mu, nullptr);
    codes.push_back(std::move(mu));
  }
  return codes;
}

// ---------------------------------------------------------------------------
// Model bundle: directory with arch.json, one checkpoint and one stats file
// per network, the train/test split, and the loss curves.

namespace detail {

inline void save_norm_stats(const std::string& path, const NormStats& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("norm stats: cannot open for writing: " + path);
  put_u32(out, std::uint32_t(s.mean.size()));
  for (Eigen::Index i = 0; i < s.mean.size(); ++i) put_f64(out, s.mean(i));
  for (Eigen::Index i = 0; i < s.std_dev.size(); ++i) put_f64(out, s.std_dev(i));
  if (!out) throw DataError("norm stats: write failed: " + path);
}

inline NormStats load_norm_stats(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("norm stats: cannot open: " + path);
  const std::uint32_t dim = get_u32(in, "norm dim");
  if (dim > (1u << 20)) throw DataError("norm stats: implausible dimension");
  NormStats s;
  s.mean.resize(dim);
  s.std_dev.resize(dim);
  for (std::uint32_t i = 0; i < dim; ++i) s.mean(i) = get_f64(in, "norm mean");
  for (std::uint32_t i = 0; i < dim; ++i) s.std_dev(i) = get_f64(in, "norm std");
  return s;
}

}  // namespace detail

inline nlohmann::json arch_to_json(const ArchSpec& arch) {
  return nlohmann::json{{"kind", to_string(arch.kind)},
                        {"condition_on_f0", arch.condition_on_f0},
                        {"condition_residual", arch.condition_residual},
                        {"latent_dim", arch.latent_dim},
                        {"beta", arch.beta},
                        {"epochs", arch.epochs},
                        {"batch_size", arch.batch_size},
                        {"lr", arch.lr},
                        {"hidden", arch.hidden},
                        {"leaky_slope", arch.leaky_slope},
                        {"f0_min_hz", arch.f0_min_hz},
                        {"f0_max_hz", arch.f0_max_hz}};
}

inline ArchSpec arch_from_json(const nlohmann::json& j) {
  ArchSpec arch;
  try {
    arch.kind = arch_kind_from_string(j.at("kind").get<std::string>());
    arch.condition_on_f0 = j.at("condition_on_f0").get<bool>();
    arch.condition_residual = j.at("condition_residual").get<bool>();
    arch.latent_dim = j.at("latent_dim").get<int>();
    arch.beta = j.at("beta").get<double>();
    arch.epochs = j.at("epochs").get<int>();
    arch.batch_size = j.at("batch_size").get<int>();
    arch.lr = j.at("lr").get<double>();
    arch.hidden = j.at("hidden").get<std::vector<int>>();
    arch.leaky_slope = j.at("leaky_slope").get<double>();
    arch.f0_min_hz = j.at("f0_min_hz").get<double>();
    arch.f0_max_hz = j.at("f0_max_hz").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("arch.json: ") + e.what());
  }
  arch.validate();
  return arch;
}

inline void save_model(const std::string& dir, const TrainedModel& model) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const auto names = model.arch.stream_names();

  {
    nlohmann::json j = arch_to_json(model.arch);
    j["seed"] = model.seed;
    j["streams"] = names;
    std::ofstream out(fs::path(dir) / "arch.json");
    if (!out) throw DataError("save_model: cannot write arch.json");
    out << j.dump(2) << "\n";
  }

  for (std::size_t s = 0; s < model.nets.size(); ++s) {
    TrainCheckpoint ckpt;
    ckpt.vae = model.nets[s];
    ckpt.adam_enc = make_adam_state(model.nets[s].encoder);
    ckpt.adam_dec = make_adam_state(model.nets[s].decoder);
    ckpt.epoch = std::uint64_t(model.arch.epochs);
    save_checkpoint_file((fs::path(dir) / ("net_" + names[s] + ".ckpt")).string(), ckpt);
    detail::save_norm_stats((fs::path(dir) / ("net_" + names[s] + ".norm")).string(),
                            model.stats[s]);
  }

  {
    std::ofstream out(fs::path(dir) / "split.csv");
    if (!out) throw DataError("save_model: cannot write split.csv");
    out << "row,role\n";
    for (auto i : model.split.train) out << i << ",train\n";
    for (auto i : model.split.test) out << i << ",test\n";
  }

  {
    std::ofstream out(fs::path(dir) / "loss_curve.csv");
    if (!out) throw DataError("save_model: cannot write loss_curve.csv");
    out << "epoch";
    for (const auto& name : names) out << "," << name << "_train," << name << "_test";
    out << "\n";
    const std::size_t epochs = model.curves.empty() ? 0 : model.curves[0].train.size();
    for (std::size_t e = 0; e < epochs; ++e) {
      out << e;
      for (const auto& curve : model.curves)
        out << "," << format_float(curve.train[e]) << "," << format_float(curve.test[e]);
      out << "\n";
    }
  }
}

inline TrainedModel load_model(const std::string& dir) {
  namespace fs = std::filesystem;
  TrainedModel model;

  nlohmann::json j;
  {
    std::ifstream in(fs::path(dir) / "arch.json");
    if (!in) throw DataError("load_model: missing arch.json in " + dir);
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("arch.json: ") + e.what());
    }
  }
  model.arch = arch_from_json(j);
  if (j.contains("seed")) model.seed = j["seed"].get<std::uint64_t>();

  for (const auto& name : model.arch.stream_names()) {
    const auto ckpt = load_checkpoint_file((fs::path(dir) / ("net_" + name + ".ckpt")).string());
    model.nets.push_back(ckpt.vae);
    model.stats.push_back(
        detail::load_norm_stats((fs::path(dir) / ("net_" + name + ".norm")).string()));
  }

  {
    std::ifstream in(fs::path(dir) / "split.csv");
    if (!in) throw DataError("load_model: missing split.csv in " + dir);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto fields = split_csv_line(line);
      if (fields.size() != 2) throw DataError("split.csv: bad row: " + line);
      const std::size_t row = std::size_t(parse_double(fields[0], "split.csv"));
      if (fields[1] == "train")
        model.split.train.push_back(row);
      else if (fields[1] == "test")
        model.split.test.push_back(row);
      else
        throw DataError("split.csv: bad role: " + fields[1]);
    }
  }

  {
    std::ifstream in(fs::path(dir) / "loss_curve.csv");
    if (in) {
      model.curves.assign(model.nets.size(), LossCurve{});
      std::string line;
      std::getline(in, line);  // header
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 1 + 2 * model.nets.size())
          throw DataError("loss_curve.csv: bad row: " + line);
        for (std::size_t s = 0; s < model.nets.size(); ++s) {
          model.curves[s].train.push_back(parse_double(fields[1 + 2 * s], "loss_curve.csv"));
          model.curves[s].test.push_back(parse_double(fields[2 + 2 * s], "loss_curve.csv"));
        }
      }
    }
  }
  return model;
}

}  // namespace hprvae
