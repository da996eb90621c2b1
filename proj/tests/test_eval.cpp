#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "hprvae/eval.hpp"
#include "hprvae/gen.hpp"

#include "oracles.hpp"

using namespace hprvae;

namespace {

GeneratedNote test_note(NoteName note, Loudness loud = Loudness::soft,
                        double duration_s = 1.4) {
  NoteMeta meta;
  meta.index = 1;
  meta.octave = Octave::middle;
  meta.note = note;
  meta.style = Style::smooth;
  meta.loudness = loud;
  GenParams params;
  params.duration_s = duration_s;
  return synth_note(meta, make_body_filter(77), 4242, params);
}

// Same toy corpus shape as the model tests: two notes with distinct envelope
// patterns and valid corpus ids so per-note bucketing can parse them.
FeatureTable toy_rows(int frames_per_note, std::uint64_t seed) {
  Rng rng(seed);
  FeatureTable rows;
  const double f0s[2] = {328.0, 492.0};
  const char* ids[2] = {"01_M_Sa_Sm_So", "02_M_Pa_Sm_So"};
  for (int note = 0; note < 2; ++note) {
    std::vector<double> base_h(std::size_t(kHarmonicWidth), 0.0);
    std::vector<double> base_r(std::size_t(kResidualWidth), 0.0);
    for (int i = 0; i < kHarmonicWidth; ++i)
      base_h[std::size_t(i)] = (note ? 1.0 : -1.0) * std::cos(0.21 * i) * 3.0 / (1.0 + 0.1 * i);
    for (int i = 0; i < kResidualWidth; ++i)
      base_r[std::size_t(i)] = (note ? -1.0 : 1.0) * std::sin(0.13 * i) * 2.0 / (1.0 + 0.1 * i);
    for (int f = 0; f < frames_per_note; ++f) {
      FrameFeatures row;
      row.note_id = ids[note];
      row.frame_index = f;
      row.f0_hz = f0s[note];
      row.cc_h.resize(std::size_t(kHarmonicWidth));
      row.cc_r.resize(std::size_t(kResidualWidth));
      for (int i = 0; i < kHarmonicWidth; ++i)
        row.cc_h[std::size_t(i)] = base_h[std::size_t(i)] + 0.05 * rng.normal();
      for (int i = 0; i < kResidualWidth; ++i)
        row.cc_r[std::size_t(i)] = base_r[std::size_t(i)] + 0.05 * rng.normal();
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::filesystem::path temp_dir(const char* tag) {
  const auto dir = std::filesystem::temp_directory_path() /
                   (std::string("hprvae_eval_") + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("snr_db matches a directly computed power ratio") {
  std::vector<double> ref(1000), est(1000);
  for (std::size_t i = 0; i < ref.size(); ++i) {
    ref[i] = std::sin(0.037 * double(i));
    est[i] = ref[i] + 0.01 * std::cos(0.11 * double(i));
  }
  double sig = 0.0, err = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    sig += ref[i] * ref[i];
    const double d = ref[i] - est[i];
    err += d * d;
  }
  CHECK(snr_db(ref, est) == Catch::Approx(10.0 * std::log10(sig / err)).margin(1e-12));
  CHECK(snr_db(ref, ref) == 300.0);
  CHECK_THROWS_AS(snr_db(ref, std::span<const double>(est.data(), 10)),
                  std::invalid_argument);
}

TEST_CASE("analyze_note tracks pitch and interpolates harmonic magnitudes") {
  const auto gen = test_note(NoteName::Sa);
  const AnalysisConfig cfg;
  const auto na = analyze_note(gen.record, cfg);

  REQUIRE(na.frames.size() >= 100);
  CHECK(na.note_id == gen.record.note_id);
  // the analyzed span is a real sustain chunk of the 1.4 s note
  CHECK(na.sustain_end - na.sustain_start >= long(0.8 * cfg.sample_rate_hz));

  const double f0_true = gen.truth.f0_hz;
  std::vector<double> fit_errors;
  for (const auto& frame : na.frames) {
    CHECK((frame.center_sample - na.sustain_start) % cfg.hop_size == 0);
    CHECK(std::abs(frame.harm.f0_hz - f0_true) / f0_true < 0.01);

    // envelope contract at the measured harmonics: never below sample - tol,
    // and tight in the typical case
    const auto env_at = envelope_eval(frame.env_h, frame.harm.freqs_hz,
                                      double(cfg.sample_rate_hz));
    for (std::size_t h = 0; h < frame.harm.size(); ++h) {
      if (frame.harm.mags_db[h] <= cfg.mag_floor_db) continue;
      CHECK(env_at[h] >= frame.harm.mags_db[h] - 2.0 - 1e-9);
      fit_errors.push_back(std::abs(env_at[h] - frame.harm.mags_db[h]));
    }
    CHECK(frame.env_r.order() == kResidualOrder);
  }
  // The ridge-stabilized fit does not interpolate exactly; the typical error
  // at the harmonics still sits well inside the 2 dB envelope tolerance.
  std::sort(fit_errors.begin(), fit_errors.end());
  INFO("median fit error " << fit_errors[fit_errors.size() / 2]);
  CHECK(fit_errors[fit_errors.size() / 2] < 1.0);

  const auto rows = to_features(na);
  REQUIRE(rows.size() == na.frames.size());
  CHECK(rows[0].note_id == gen.record.note_id);
  CHECK(rows[5].frame_index == 5);

  NoteRecord bad = gen.record;
  bad.sample_rate_hz = 48000;
  CHECK_THROWS_AS(analyze_note(bad, cfg), DataError);
}

TEST_CASE("pass-through resynthesis reproduces the harmonic part and noise level") {
  const auto gen = test_note(NoteName::Ga3, Loudness::loud, 1.6);
  const AnalysisConfig cfg;
  const auto na = analyze_note(gen.record, cfg);
  const auto out = resynthesize(na, cfg, 9001);

  REQUIRE(out.start_sample >= 0);
  REQUIRE(out.start_sample + long(out.samples.size()) <= long(gen.record.samples.size()));
  REQUIRE(out.samples.size() == out.harmonic.size());
  REQUIRE(out.samples.size() == out.residual.size());

  // the two parts sum to the mix exactly
  for (std::size_t i = 0; i < out.samples.size(); ++i)
    REQUIRE(out.samples[i] == out.harmonic[i] + out.residual[i]);

  // harmonic fidelity against the generator's own harmonic component
  std::span<const double> truth_h(gen.harmonic_part.data() + out.start_sample,
                                  out.harmonic.size());
  const double snr = snr_db(truth_h, out.harmonic);
  INFO("harmonic SNR dB: " << snr);
  CHECK(snr >= 25.0);

  // noise power lands near the generator's noise power (interior slice only,
  // away from the half-covered overlap-add edges)
  const std::size_t lo = std::size_t(cfg.hop_size);
  const std::size_t hi = out.residual.size() - std::size_t(cfg.hop_size);
  double p_est = 0.0, p_true = 0.0;
  for (std::size_t i = lo; i < hi; ++i) {
    p_est += out.residual[i] * out.residual[i];
    p_true += gen.noise_part[std::size_t(out.start_sample) + i] *
              gen.noise_part[std::size_t(out.start_sample) + i];
  }
  const double level_err_db = 10.0 * std::log10(p_est / p_true);
  INFO("noise level error dB: " << level_err_db);
  CHECK(std::abs(level_err_db) <= 3.0);
}

TEST_CASE("resynthesis is seed-deterministic with a noise-only seed effect") {
  const auto gen = test_note(NoteName::Ri2, Loudness::soft, 1.0);
  const AnalysisConfig cfg;
  const auto na = analyze_note(gen.record, cfg);

  const auto a = resynthesize(na, cfg, 5);
  const auto b = resynthesize(na, cfg, 5);
  const auto c = resynthesize(na, cfg, 6);
  CHECK(a.samples == b.samples);
  CHECK(a.harmonic == c.harmonic);
  CHECK(a.residual != c.residual);
}

TEST_CASE("resynthesis handles a skipped analysis frame") {
  const auto gen = test_note(NoteName::Ma1, Loudness::soft, 1.0);
  const AnalysisConfig cfg;
  auto na = analyze_note(gen.record, cfg);
  REQUIRE(na.frames.size() >= 10);

  const long span_before = na.frames.back().center_sample - na.frames.front().center_sample;
  na.frames.erase(na.frames.begin() + 4);  // hole in the frame grid
  const auto out = resynthesize(na, cfg, 1);
  CHECK(long(out.samples.size()) == span_before + 2 * cfg.hop_size);
  for (double v : out.samples) REQUIRE(std::isfinite(v));
}

TEST_CASE("envelope override path replaces the stored envelopes") {
  const auto gen = test_note(NoteName::Da1, Loudness::soft, 1.0);
  const AnalysisConfig cfg;
  const auto na = analyze_note(gen.record, cfg);
  const auto rows = to_features(na);
  const int n = int(rows.size());

  // feed the frames' own coefficients back through the matrix interface:
  // identical output to the stored-envelope path
  Eigen::MatrixXd cc_h(kHarmonicWidth, n), cc_r(kResidualWidth, n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < kHarmonicWidth; ++i) cc_h(i, j) = rows[std::size_t(j)].cc_h[std::size_t(i)];
    for (int i = 0; i < kResidualWidth; ++i) cc_r(i, j) = rows[std::size_t(j)].cc_r[std::size_t(i)];
  }
  const auto direct = resynthesize(na, cfg, 3);
  const auto via_cc = resynthesize(na, cfg, 3, &cc_h, &cc_r);
  REQUIRE(via_cc.samples.size() == direct.samples.size());
  for (std::size_t i = 0; i < direct.samples.size(); ++i)
    REQUIRE(via_cc.samples[i] == Catch::Approx(direct.samples[i]).margin(1e-9));

  // a muted harmonic envelope silences the harmonic part
  Eigen::MatrixXd mute = Eigen::MatrixXd::Zero(kHarmonicWidth, n);
  mute.row(0).setConstant(-120.0);
  const auto muted = resynthesize(na, cfg, 3, &mute, &cc_r);
  double p = 0.0;
  for (double v : muted.harmonic) p += v * v;
  CHECK(10.0 * std::log10(p / double(muted.harmonic.size()) + 1e-30) < -100.0);

  Eigen::MatrixXd wrong(kHarmonicWidth, n + 1);
  CHECK_THROWS_AS(resynthesize(na, cfg, 3, &wrong, nullptr), std::invalid_argument);
}

TEST_CASE("tsne separates well-spread blobs and matches the silhouette oracle") {
  Rng rng(11);
  const int per_blob = 40;
  Eigen::MatrixXd points(5, 3 * per_blob);
  std::vector<int> labels;
  for (int b = 0; b < 3; ++b) {
    Eigen::VectorXd center = Eigen::VectorXd::Zero(5);
    center(b) = 6.0;
    for (int i = 0; i < per_blob; ++i) {
      for (int d = 0; d < 5; ++d)
        points(d, b * per_blob + i) = center(d) + 0.05 * rng.normal();
      labels.push_back(b);
    }
  }

  TsneParams params;
  params.perplexity = 20.0;
  params.iters = 600;
  params.seed = 3;
  const auto res = tsne_embed(points, params);
  REQUIRE(res.y.cols() == 3 * per_blob);
  REQUIRE(res.kl_trace.size() == 600);

  const double sil = mean_silhouette(res.y, labels);
  INFO("blob silhouette: " << sil);
  CHECK(sil > 0.5);

  std::vector<double> xs(labels.size()), ys(labels.size());
  for (std::size_t j = 0; j < labels.size(); ++j) {
    xs[j] = res.y(0, std::ptrdiff_t(j));
    ys[j] = res.y(1, std::ptrdiff_t(j));
  }
  CHECK(std::abs(sil - oracles::silhouette_2d(xs, ys, labels)) < 1e-9);

  // objective settles: no increase across the post-exaggeration half
  const std::size_t mid = res.kl_trace.size() / 2;
  CHECK(res.kl_trace.back() <= res.kl_trace[mid] + 1e-6);
}

TEST_CASE("tsne keeps duplicate points nearly coincident") {
  // every point duplicated: identical affinity rows pin each twin pair
  // together while distinct locations spread out. The step size obeys the
  // attraction-stability bound (about n / 4 per unit affinity mass); the
  // pinned default of 200 is tuned for corpus-sized inputs and overshoots on
  // a set this small.
  Rng rng(33);
  const int distinct = 150;
  Eigen::MatrixXd points(6, 2 * distinct);
  for (int k = 0; k < distinct; ++k) {
    for (Eigen::Index d = 0; d < points.rows(); ++d) points(d, 2 * k) = 3.0 * rng.normal();
    points.col(2 * k + 1) = points.col(2 * k);
  }

  TsneParams params;
  params.perplexity = 2.0;
  params.iters = 800;
  params.learning_rate = 10.0;
  params.exaggeration_iters = 0;
  params.momentum_switch_iter = 100;
  params.seed = 9;
  const auto res = tsne_embed(points, params);

  std::vector<double> dists;
  for (Eigen::Index i = 0; i < points.cols(); ++i)
    for (Eigen::Index j = i + 1; j < points.cols(); ++j)
      dists.push_back((res.y.col(i) - res.y.col(j)).norm());
  std::sort(dists.begin(), dists.end());
  const double median = dists[dists.size() / 2];
  double worst = 0.0;
  for (int k = 0; k < distinct; ++k)
    worst = std::max(worst, (res.y.col(2 * k) - res.y.col(2 * k + 1)).norm());
  INFO("worst twin dist " << worst << " median " << median);
  CHECK(worst < median / 100.0);
}

TEST_CASE("tsne is seed-deterministic and validates its inputs") {
  Rng rng(31);
  Eigen::MatrixXd points(3, 50);
  for (Eigen::Index j = 0; j < points.cols(); ++j)
    for (Eigen::Index d = 0; d < points.rows(); ++d) points(d, j) = rng.normal();

  TsneParams params;
  params.perplexity = 10.0;
  params.iters = 120;
  params.seed = 4;
  const auto a = tsne_embed(points, params);
  const auto b = tsne_embed(points, params);
  CHECK(a.y == b.y);
  CHECK(a.kl_trace == b.kl_trace);
  params.seed = 5;
  const auto c = tsne_embed(points, params);
  CHECK(a.y != c.y);

  params.perplexity = 30.0;  // 50 < 3 * 30
  CHECK_THROWS_AS(tsne_embed(points, params), std::invalid_argument);
  params.perplexity = 0.5;
  CHECK_THROWS_AS(tsne_embed(points, params), std::invalid_argument);
}

TEST_CASE("mean_silhouette handles singletons and validates labels") {
  Eigen::MatrixXd pts(2, 6);
  pts << 0.0, 0.1, 0.2, 5.0, 5.1, 9.0,
         0.0, 0.1, -0.1, 5.0, 4.9, 9.0;
  const std::vector<int> labels = {0, 0, 0, 1, 1, 2};  // last cluster is a singleton

  std::vector<double> xs(6), ys(6);
  for (int j = 0; j < 6; ++j) {
    xs[std::size_t(j)] = pts(0, j);
    ys[std::size_t(j)] = pts(1, j);
  }
  CHECK(std::abs(mean_silhouette(pts, labels) -
                 oracles::silhouette_2d(xs, ys, labels)) < 1e-9);

  const std::vector<int> one_label = {0, 0, 0, 0, 0, 0};
  CHECK_THROWS_AS(mean_silhouette(pts, one_label), std::invalid_argument);
  const std::vector<int> short_labels = {0, 1};
  CHECK_THROWS_AS(mean_silhouette(pts, short_labels), std::invalid_argument);
}

TEST_CASE("mse_report buckets by note and satisfies frame-weighted additivity") {
  const auto rows = toy_rows(60, 17);
  SplitSpec spec;
  spec.seed = 2;
  const auto split = make_split(rows, spec);

  ArchSpec arch;
  arch.kind = ArchKind::jnet;
  arch.latent_dim = 8;
  arch.hidden = {32, 24};
  arch.epochs = 80;
  arch.batch_size = 32;
  const auto model = train_model(rows, arch, split, 7);

  const auto report = mse_report(model, rows);
  REQUIRE(report.per_note.size() == 2);  // Sa and Pa only; empty buckets omitted
  CHECK(report.per_note[0].note == "Sa");
  CHECK(report.per_note[1].note == "Pa");
  CHECK(report.n_frames == long(split.test.size()));

  // the overall numbers are the frame-weighted bucket means
  double h = 0.0, r = 0.0;
  long n = 0;
  for (const auto& bucket : report.per_note) {
    CHECK(bucket.harmonic_mse > 0.0);
    CHECK(bucket.residual_mse > 0.0);
    h += bucket.harmonic_mse * double(bucket.n_frames);
    r += bucket.residual_mse * double(bucket.n_frames);
    n += bucket.n_frames;
  }
  CHECK(report.harmonic_mse == Catch::Approx(h / double(n)).epsilon(1e-12));
  CHECK(report.residual_mse == Catch::Approx(r / double(n)).epsilon(1e-12));

  // oracle for the overall harmonic number, recomputed from scratch in the
  // shared normalized space
  Eigen::MatrixXd raw_h(kHarmonicWidth, int(rows.size()));
  for (int j = 0; j < int(rows.size()); ++j)
    for (int i = 0; i < kHarmonicWidth; ++i)
      raw_h(i, j) = rows[std::size_t(j)].cc_h[std::size_t(i)];
  Eigen::MatrixXd train_h(kHarmonicWidth, int(split.train.size()));
  for (int j = 0; j < int(split.train.size()); ++j)
    train_h.col(j) = raw_h.col(Eigen::Index(split.train[std::size_t(j)]));
  const auto stats = compute_norm_stats(train_h);
  const auto rec = reconstruct(model, rows);
  double sse = 0.0;
  for (const std::size_t j : split.test)
    sse += (normalize(rec.cc_h, stats).col(Eigen::Index(j)) -
            normalize(raw_h, stats).col(Eigen::Index(j)))
               .squaredNorm();
  CHECK(report.harmonic_mse ==
        Catch::Approx(sse / (double(split.test.size()) * kHarmonicWidth)).epsilon(1e-12));

  // the ten svaras with no frames are reported as missing, in order
  REQUIRE(report.missing_notes.size() == 10);
  CHECK(report.missing_notes[0] == "Ri1");
  CHECK(report.missing_notes.back() == "Ni3");

  CHECK_THROWS_AS(mse_report(model, rows, {rows.size() + 5}), std::invalid_argument);
}

TEST_CASE("mse_report_from has the closed-form values for offset reconstructions") {
  const auto rows = toy_rows(20, 5);
  const auto [raw_h, raw_r] = raw_coeff_matrices(rows);
  const auto stats_h = compute_norm_stats(raw_h);
  const auto stats_r = compute_norm_stats(raw_r);
  std::vector<std::size_t> all(rows.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

  // perfect reconstruction scores zero everywhere
  Reconstruction perfect{raw_h, raw_r};
  const auto zero = mse_report_from(perfect, rows, stats_h, stats_r, all);
  for (const auto& bucket : zero.per_note) {
    CHECK(bucket.harmonic_mse == 0.0);
    CHECK(bucket.residual_mse == 0.0);
  }
  CHECK(zero.harmonic_mse == 0.0);

  // adding eps * std to every raw dimension offsets the normalized space by
  // exactly eps, so the MSE is eps^2
  const double eps = 0.35;
  Reconstruction offset;
  offset.cc_h = raw_h.array().colwise() + eps * stats_h.std_dev.array();
  offset.cc_r = raw_r.array().colwise() + eps * stats_r.std_dev.array();
  const auto shifted = mse_report_from(offset, rows, stats_h, stats_r, all);
  CHECK(shifted.harmonic_mse == Catch::Approx(eps * eps).epsilon(1e-12));
  CHECK(shifted.residual_mse == Catch::Approx(eps * eps).epsilon(1e-12));
  for (const auto& bucket : shifted.per_note)
    CHECK(bucket.harmonic_mse == Catch::Approx(eps * eps).epsilon(1e-12));

  Reconstruction bad{raw_h.leftCols(3), raw_r.leftCols(3)};
  CHECK_THROWS_AS(mse_report_from(bad, rows, stats_h, stats_r, all), std::invalid_argument);
}

TEST_CASE("mse and embedding CSV files round-trip their contents") {
  const auto dir = temp_dir("csv");

  MseReport report;
  report.per_note.push_back({"Sa", 0.125, 0.5, 40});
  report.per_note.push_back({"Pa", 0.25, 1.0, 20});
  report.n_frames = 60;
  report.harmonic_mse = (0.125 * 40 + 0.25 * 20) / 60.0;
  report.residual_mse = (0.5 * 40 + 1.0 * 20) / 60.0;
  const auto mse_path = (dir / "mse.csv").string();
  write_mse_csv(mse_path, {{"inet", report}});

  std::ifstream in(mse_path);
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "architecture,note,component,mse,n_frames");
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() == 6);  // 2 notes x 2 components + 2 overall rows
  CHECK(lines[0] == "inet,Sa,harmonic,0.125,40");
  CHECK(lines[3] == "inet,Pa,residual,1,20");
  CHECK(lines[4].substr(0, 17) == "inet,all,harmonic");

  EmbeddingTable table;
  table.xy.resize(2, 3);
  table.xy << 1.5, -2.25, 0.0, 3.0, 4.5, -1.125;
  table.labels = {0, 7, 11};
  const auto emb_path = (dir / "embedding.csv").string();
  write_embedding_csv(emb_path, table);
  std::ifstream ein(emb_path);
  REQUIRE(std::getline(ein, line));
  CHECK(line == "x,y,c");
  REQUIRE(std::getline(ein, line));
  CHECK(line == "1.5,3,0");
  REQUIRE(std::getline(ein, line));
  CHECK(line == "-2.25,4.5,7");

  table.labels = {0, 1};
  CHECK_THROWS_AS(write_embedding_csv(emb_path, table), std::invalid_argument);
  std::filesystem::remove_all(dir);
}

TEST_CASE("dump_envelopes writes readable per-frame curves") {
  const auto gen = test_note(NoteName::Ni2, Loudness::soft, 0.8);
  const AnalysisConfig cfg;
  auto na = analyze_note(gen.record, cfg);
  na.frames.resize(3);  // a few frames keep the file count small

  const auto dir = temp_dir("dump");
  const auto files = dump_envelopes(dir.string(), na, cfg);
  REQUIRE(files.size() == 9);

  const auto [hdr_h, rows_h] = read_two_column_csv((dir / "frame_0001_h.csv").string());
  CHECK(hdr_h == "f,taeH");
  REQUIRE(rows_h.size() == std::size_t(cfg.fft_size) / 2 + 1);
  const auto [hdr_r, rows_r] = read_two_column_csv((dir / "frame_0001_r.csv").string());
  CHECK(hdr_r == "f,taeR");
  const auto [hdr_m, rows_m] = read_two_column_csv((dir / "frame_0001_harm.csv").string());
  CHECK(hdr_m == "nF,nM");
  REQUIRE(rows_m.size() == na.frames[1].harm.size());

  // bin grid and envelope values survive the text round trip
  const double fs = double(cfg.sample_rate_hz);
  std::vector<double> freqs(rows_h.size());
  for (std::size_t i = 0; i < freqs.size(); ++i) freqs[i] = rows_h[i][0];
  CHECK(freqs[1] == Catch::Approx(fs / cfg.fft_size).epsilon(1e-12));
  const auto env_h = envelope_eval(na.frames[1].env_h, freqs, fs);
  const auto env_r = envelope_eval(na.frames[1].env_r, freqs, fs);
  for (std::size_t i = 0; i < freqs.size(); ++i) {
    CHECK(std::abs(env_h[i] - rows_h[i][1]) < 1e-6);
    CHECK(std::abs(env_r[i] - rows_r[i][1]) < 1e-6);
  }

  // the dumped envelope sits on or above the dumped peaks it was fit to
  for (const auto& row : rows_m) {
    const std::vector<double> f = {row[0]};
    CHECK(envelope_eval(na.frames[1].env_h, f, fs)[0] >= row[1] - 2.0 - 1e-6);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("embed_subsample is deterministic, ordered, and capped") {
  const auto all = embed_subsample(10, 20);
  REQUIRE(all.size() == 10);
  for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);

  const auto capped = embed_subsample(1000, 64);
  REQUIRE(capped.size() <= 64);
  REQUIRE(capped.size() >= 60);
  CHECK(capped.front() == 0);
  CHECK(capped.back() >= 900);
  for (std::size_t i = 1; i < capped.size(); ++i) CHECK(capped[i] > capped[i - 1]);

  CHECK_THROWS_AS(embed_subsample(5, 0), std::invalid_argument);
}

TEST_CASE("conditioning_study produces labeled embeddings with finite scores") {
  const auto rows = toy_rows(40, 23);
  SplitSpec spec;
  spec.seed = 3;
  const auto split = make_split(rows, spec);

  ArchSpec arch;
  arch.latent_dim = 4;
  arch.hidden = {16, 12};
  arch.epochs = 40;
  arch.batch_size = 16;

  TsneParams tp;
  tp.perplexity = 8.0;
  tp.iters = 150;
  tp.exaggeration_iters = 50;
  tp.momentum_switch_iter = 50;

  // without the extra residual embedding the report is exactly the two
  // harmonic embeddings
  const auto bare = conditioning_study(rows, arch, split, 99, tp, 60);
  CHECK(!bare.residual_unconditioned.has_value());

  const auto study = conditioning_study(rows, arch, split, 99, tp, 60, true);
  CHECK(study.seed == 99);
  REQUIRE(study.residual_unconditioned.has_value());
  for (const auto* se : {&study.harmonic_unconditioned, &study.harmonic_conditioned,
                         &*study.residual_unconditioned}) {
    REQUIRE(se->table.xy.cols() == 60);
    REQUIRE(se->table.labels.size() == 60);
    CHECK(se->silhouette >= -1.0);
    CHECK(se->silhouette <= 1.0);
    CHECK(se->kl_trace.size() == 150);
    for (Eigen::Index j = 0; j < se->table.xy.cols(); ++j) {
      REQUIRE(std::isfinite(se->table.xy(0, j)));
      REQUIRE(std::isfinite(se->table.xy(1, j)));
    }
  }
  // labels follow the subsample: both toy notes appear
  const auto& labels = study.harmonic_unconditioned.table.labels;
  CHECK(std::count(labels.begin(), labels.end(), int(NoteName::Sa)) > 0);
  CHECK(std::count(labels.begin(), labels.end(), int(NoteName::Pa)) > 0);

  // the study is reproducible end to end
  const auto again = conditioning_study(rows, arch, split, 99, tp, 60, true);
  CHECK(again.harmonic_unconditioned.table.xy == study.harmonic_unconditioned.table.xy);
  CHECK(again.residual_unconditioned->silhouette == study.residual_unconditioned->silhouette);
}
