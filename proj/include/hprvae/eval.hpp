#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hprvae/dataset.hpp"
#include "hprvae/features.hpp"
#include "hprvae/models.hpp"
#include "hprvae/pipeline.hpp"
#include "hprvae/tsne.hpp"

namespace hprvae {

// Svara index 0..11 parsed from a note id of the corpus naming scheme.
inline int svara_label(const std::string& note_id) {
  return int(parse_note_filename(note_id).note);
}

// ---------------------------------------------------------------------------
// Reconstruction error report. Errors are measured in a harmonic/residual
// coefficient space normalized with statistics of the model's own train rows,
// so architectures whose internal network spaces differ (concatenated or
// sum/difference streams) stay directly comparable.

struct NoteMse {
  std::string note;  // svara name
  double harmonic_mse = 0.0;
  double residual_mse = 0.0;
  long n_frames = 0;
};

struct MseReport {
  std::vector<NoteMse> per_note;          // svara order, empty buckets omitted
  std::vector<std::string> missing_notes; // empty buckets, for caller warnings
  double harmonic_mse = 0.0;              // frame-weighted means over all rows below
  double residual_mse = 0.0;
  long n_frames = 0;
};

// Raw per-frame coefficient matrices of a feature table.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> raw_coeff_matrices(const FeatureTable& rows) {
  const int n = int(rows.size());
  Eigen::MatrixXd h(kHarmonicWidth, n), r(kResidualWidth, n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < kHarmonicWidth; ++i) h(i, j) = rows[std::size_t(j)].cc_h[std::size_t(i)];
    for (int i = 0; i < kResidualWidth; ++i) r(i, j) = rows[std::size_t(j)].cc_r[std::size_t(i)];
  }
  return {std::move(h), std::move(r)};
}

// Bucketed error report of a reconstruction against the stored coefficients,
// in the normalized space defined by the given statistics.
inline MseReport mse_report_from(const Reconstruction& rec, const FeatureTable& rows,
                                 const NormStats& stats_h, const NormStats& stats_r,
                                 const std::vector<std::size_t>& eval_idx) {
  const auto [h, r] = raw_coeff_matrices(rows);
  if (rec.cc_h.cols() != h.cols() || rec.cc_r.cols() != r.cols())
    throw std::invalid_argument("mse_report_from: reconstruction/rows size mismatch");
  const Eigen::MatrixXd err_h = normalize(rec.cc_h, stats_h) - normalize(h, stats_h);
  const Eigen::MatrixXd err_r = normalize(rec.cc_r, stats_r) - normalize(r, stats_r);

  std::array<double, kNumSvara> sse_h{}, sse_r{};
  std::array<long, kNumSvara> count{};
  for (const std::size_t j : eval_idx) {
    if (j >= rows.size()) throw std::invalid_argument("mse_report_from: eval index out of range");
    const int s = svara_label(rows[j].note_id);
    sse_h[std::size_t(s)] += err_h.col(Eigen::Index(j)).squaredNorm();
    sse_r[std::size_t(s)] += err_r.col(Eigen::Index(j)).squaredNorm();
    count[std::size_t(s)] += 1;
  }

  MseReport report;
  double total_h = 0.0, total_r = 0.0;
  for (int s = 0; s < kNumSvara; ++s) {
    if (count[std::size_t(s)] == 0) {
      report.missing_notes.push_back(to_string(NoteName(s)));
      continue;
    }
    NoteMse bucket;
    bucket.note = to_string(NoteName(s));
    bucket.n_frames = count[std::size_t(s)];
    bucket.harmonic_mse = sse_h[std::size_t(s)] / (double(bucket.n_frames) * kHarmonicWidth);
    bucket.residual_mse = sse_r[std::size_t(s)] / (double(bucket.n_frames) * kResidualWidth);
    report.per_note.push_back(bucket);
    total_h += sse_h[std::size_t(s)];
    total_r += sse_r[std::size_t(s)];
    report.n_frames += bucket.n_frames;
  }
  if (report.n_frames > 0) {
    report.harmonic_mse = total_h / (double(report.n_frames) * kHarmonicWidth);
    report.residual_mse = total_r / (double(report.n_frames) * kResidualWidth);
  }
  return report;
}

// Model-level report: reconstructs the rows and scores them in a normalized
// space built from the model's own train rows.
inline MseReport mse_report(const TrainedModel& model, const FeatureTable& rows,
                            const std::vector<std::size_t>& eval_idx) {
  const auto [h, r] = raw_coeff_matrices(rows);
  const NormStats stats_h = compute_norm_stats(detail::select_cols(h, model.split.train));
  const NormStats stats_r = compute_norm_stats(detail::select_cols(r, model.split.train));
  return mse_report_from(reconstruct(model, rows), rows, stats_h, stats_r, eval_idx);
}

inline MseReport mse_report(const TrainedModel& model, const FeatureTable& rows) {
  return mse_report(model, rows, model.split.test);
}

// Side-by-side CSV over architectures: one row per note bucket and component,
// plus an "all" row per component.
inline void write_mse_csv(const std::string& path,
                          const std::vector<std::pair<std::string, MseReport>>& reports) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << "architecture,note,component,mse,n_frames\n";
  for (const auto& [name, report] : reports) {
    for (const auto& bucket : report.per_note) {
      out << name << "," << bucket.note << ",harmonic," << format_float(bucket.harmonic_mse)
          << "," << bucket.n_frames << "\n";
      out << name << "," << bucket.note << ",residual," << format_float(bucket.residual_mse)
          << "," << bucket.n_frames << "\n";
    }
    out << name << ",all,harmonic," << format_float(report.harmonic_mse) << ","
        << report.n_frames << "\n";
    out << name << ",all,residual," << format_float(report.residual_mse) << ","
        << report.n_frames << "\n";
  }
  if (!out) throw DataError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Latent embeddings.

struct EmbeddingTable {
  Eigen::MatrixXd xy;       // 2 x points
  std::vector<int> labels;  // svara index per point
};

inline void write_embedding_csv(const std::string& path, const EmbeddingTable& table) {
  if (table.xy.rows() != 2 || std::size_t(table.xy.cols()) != table.labels.size())
    throw std::invalid_argument("write_embedding_csv: 2 x n points with one label each");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << "x,y,c\n";
  for (Eigen::Index j = 0; j < table.xy.cols(); ++j)
    out << format_float(table.xy(0, j)) << "," << format_float(table.xy(1, j)) << ","
        << table.labels[std::size_t(j)] << "\n";
  if (!out) throw DataError("write failed: " + path);
}

// Evenly spaced deterministic subsample of {0..n-1}, at most cap indices.
inline std::vector<std::size_t> embed_subsample(std::size_t n, std::size_t cap) {
  if (cap == 0) throw std::invalid_argument("embed_subsample: zero cap");
  std::vector<std::size_t> idx;
  if (n <= cap) {
    idx.resize(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
  }
  idx.reserve(cap);
  for (std::size_t i = 0; i < cap; ++i) {
    const std::size_t j = (i * n) / cap;
    if (idx.empty() || idx.back() != j) idx.push_back(j);
  }
  return idx;
}

struct StudyEmbedding {
  EmbeddingTable table;
  double silhouette = 0.0;
  std::vector<double> kl_trace;
};

inline StudyEmbedding embed_latent(const Eigen::MatrixXd& mu, std::vector<int> labels,
                                   const TsneParams& params) {
  StudyEmbedding se;
  TsneResult res = tsne_embed(mu, params);
  se.table.xy = std::move(res.y);
  se.table.labels = std::move(labels);
  se.silhouette = mean_silhouette(se.table.xy, se.table.labels);
  se.kl_trace = std::move(res.kl_trace);
  return se;
}

// ---------------------------------------------------------------------------
// Pitch-conditioning study. Trains the split architecture twice (with and
// without the pitch condition), embeds the harmonic latent of both runs, and
// scores how strongly each embedding clusters by note with the mean
// silhouette. The report proper is that embedding/score pair; the residual
// latent of the unconditioned run is an optional extra for the noise-stream
// contrast.

struct ConditioningStudy {
  std::uint64_t seed = 0;
  StudyEmbedding harmonic_unconditioned;
  StudyEmbedding harmonic_conditioned;
  std::optional<StudyEmbedding> residual_unconditioned;
};

inline ConditioningStudy conditioning_study(const FeatureTable& rows, ArchSpec arch,
                                            const SplitIndices& split, std::uint64_t seed,
                                            const TsneParams& tsne_params,
                                            std::size_t max_points = 1200,
                                            bool include_residual = false) {
  arch.kind = ArchKind::inet;
  ArchSpec uncond = arch;
  uncond.condition_on_f0 = false;
  ArchSpec cond = arch;
  cond.condition_on_f0 = true;
  cond.condition_residual = false;

  const TrainedModel m_un = train_model(rows, uncond, split, derive_seed(seed, 1));
  const TrainedModel m_co = train_model(rows, cond, split, derive_seed(seed, 2));

  const auto idx = embed_subsample(rows.size(), max_points);
  FeatureTable sub;
  std::vector<int> labels;
  sub.reserve(idx.size());
  labels.reserve(idx.size());
  for (const std::size_t j : idx) {
    sub.push_back(rows[j]);
    labels.push_back(svara_label(rows[j].note_id));
  }

  const auto lat_un = latent_codes(m_un, sub);
  const auto lat_co = latent_codes(m_co, sub);

  ConditioningStudy study;
  study.seed = seed;
  TsneParams tp = tsne_params;
  tp.seed = derive_seed(seed, 3);
  study.harmonic_unconditioned = embed_latent(lat_un[0], labels, tp);
  tp.seed = derive_seed(seed, 4);
  study.harmonic_conditioned = embed_latent(lat_co[0], labels, tp);
  if (include_residual) {
    tp.seed = derive_seed(seed, 5);
    study.residual_unconditioned = embed_latent(lat_un[1], labels, tp);
  }
  return study;
}

// ---------------------------------------------------------------------------
// Envelope dumps: per analyzed frame, both fitted envelopes sampled on the
// spectrum bin grid plus the measured harmonic peaks, as small CSV files.

inline std::vector<std::string> dump_envelopes(const std::string& dir, const NoteAnalysis& na,
                                               const AnalysisConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const double sr = double(cfg.sample_rate_hz);
  std::vector<double> bin_freqs(std::size_t(cfg.fft_size) / 2 + 1, 0.0);
  for (std::size_t k = 0; k < bin_freqs.size(); ++k)
    bin_freqs[k] = double(k) * sr / double(cfg.fft_size);

  // 12 significant digits keep the text round trip far inside 1e-6 dB
  const auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return std::string(buf);
  };
  const auto write_curve = [&](const std::string& path, const char* header,
                               std::span<const double> f, std::span<const double> v) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << header << "\n";
    for (std::size_t i = 0; i < f.size(); ++i)
      out << fmt(f[i]) << "," << fmt(v[i]) << "\n";
    if (!out) throw DataError("write failed: " + path);
  };

  std::vector<std::string> written;
  char buf[64];
  for (std::size_t k = 0; k < na.frames.size(); ++k) {
    const auto& frame = na.frames[k];
    std::snprintf(buf, sizeof buf, "frame_%04zu", k);
    const std::string stem = (fs::path(dir) / buf).string();

    const auto env_h = envelope_eval(frame.env_h, bin_freqs, sr);
    write_curve(stem + "_h.csv", "f,taeH", bin_freqs, env_h);
    written.push_back(stem + "_h.csv");

    const auto env_r = envelope_eval(frame.env_r, bin_freqs, sr);
    write_curve(stem + "_r.csv", "f,taeR", bin_freqs, env_r);
    written.push_back(stem + "_r.csv");

    write_curve(stem + "_harm.csv", "nF,nM", frame.harm.freqs_hz, frame.harm.mags_db);
    written.push_back(stem + "_harm.csv");
  }
  return written;
}

// Reads back a two-column dump file; returns the header line and the columns.
inline std::pair<std::string, std::vector<std::array<double, 2>>> read_two_column_csv(
    const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  std::string header;
  if (!std::getline(in, header)) throw DataError("empty file: " + path);
  if (!header.empty() && header.back() == '\r') header.pop_back();
  std::vector<std::array<double, 2>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 2) throw DataError("expected two columns: " + path);
    rows.push_back({parse_double(fields[0], path), parse_double(fields[1], path)});
  }
  return {header, rows};
}

}  // namespace hprvae
