// Command-line front end: corpus generation, analysis, training,
// reconstruction, and evaluation, driven by a JSON config whose resolved
// form is snapshotted next to every command's outputs so any run can be
// replayed bit-exactly from its snapshot.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "hprvae/eval.hpp"
#include "hprvae/gen.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hprvae;

namespace {

// Seed-derivation tags, one per randomness consumer.
constexpr std::uint64_t kSeedGen = 0x67656e;
constexpr std::uint64_t kSeedSplit = 0x73706c74;
constexpr std::uint64_t kSeedTrain = 0x7472616e;
constexpr std::uint64_t kSeedResynth = 0x7265737a;
constexpr std::uint64_t kSeedEmbed = 0x656d6264;
constexpr std::uint64_t kSeedStudy = 0x73746479;

struct CliConfig {
  int version = 1;
  std::uint64_t master_seed = 1;
  std::string out_dir = "out";

  CorpusSpec corpus;
  AnalysisConfig analysis;
  ArchSpec arch;
  SplitSpec split;
  TsneParams tsne;

  std::size_t eval_max_points = 1200;
  std::vector<Octave> eval_octaves;  // empty = all octaves
  int study_seeds = 3;
  bool study = false;

  std::string corpus_dir;     // default <out>/corpus
  std::string features_path;  // default <out>/features/features.csv
  std::string model_dir;      // train output; default <out>/model_<kind>
  std::vector<std::string> model_dirs;  // eval inputs
  std::string wav_path;       // reconstruct input / eval envelope dump
};

CliConfig default_config() {
  CliConfig cfg;
  // full corpus grid: 3 octaves x 12 svara x 2 styles x 2 loudness x 2 takes
  cfg.corpus.octaves = {Octave::lower, Octave::middle, Octave::upper};
  cfg.corpus.styles = {Style::smooth, Style::attacked};
  cfg.corpus.loudnesses = {Loudness::soft, Loudness::loud};
  return cfg;
}

std::string resolve_corpus_dir(const CliConfig& cfg) {
  return cfg.corpus_dir.empty() ? (fs::path(cfg.out_dir) / "corpus").string() : cfg.corpus_dir;
}

std::string resolve_features_path(const CliConfig& cfg) {
  return cfg.features_path.empty() ? (fs::path(cfg.out_dir) / "features" / "features.csv").string()
                                   : cfg.features_path;
}

std::string resolve_model_dir(const CliConfig& cfg) {
  return cfg.model_dir.empty()
             ? (fs::path(cfg.out_dir) / (std::string("model_") + to_string(cfg.arch.kind))).string()
             : cfg.model_dir;
}

// ---------------------------------------------------------------------------
// Config serialization. Missing keys keep their defaults, unknown keys are
// rejected, and the resolved form always carries every field.

template <typename T>
void take(const json& j, const char* key, T& into) {
  if (j.contains(key)) into = j.at(key).get<T>();
}

void check_keys(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, value] : j.items())
    if (!known.count(key))
      throw std::invalid_argument("config: unknown key \"" + key + "\" in " + where);
}

json corpus_to_json(const CorpusSpec& c) {
  json j;
  j["notes"] = json::array();
  for (const auto n : c.notes) j["notes"].push_back(to_string(n));
  j["octaves"] = json::array();
  for (const auto o : c.octaves) j["octaves"].push_back(to_string(o));
  j["styles"] = json::array();
  for (const auto s : c.styles) j["styles"].push_back(to_string(s));
  j["loudnesses"] = json::array();
  for (const auto l : c.loudnesses) j["loudnesses"].push_back(to_string(l));
  j["instances"] = c.instances;
  j["duration_lo_s"] = c.duration_lo_s;
  j["duration_hi_s"] = c.duration_hi_s;
  j["tonic_hz"] = c.tonic_hz;
  j["sample_rate_hz"] = c.sample_rate_hz;
  return j;
}

void corpus_from_json(const json& j, CorpusSpec& c) {
  check_keys(j,
             {"notes", "octaves", "styles", "loudnesses", "instances", "duration_lo_s",
              "duration_hi_s", "tonic_hz", "sample_rate_hz"},
             "corpus");
  if (j.contains("notes")) {
    c.notes.clear();
    for (const auto& n : j.at("notes")) c.notes.push_back(note_name_from_string(n.get<std::string>()));
  }
  if (j.contains("octaves")) {
    c.octaves.clear();
    for (const auto& o : j.at("octaves")) c.octaves.push_back(octave_from_string(o.get<std::string>()));
  }
  if (j.contains("styles")) {
    c.styles.clear();
    for (const auto& s : j.at("styles")) c.styles.push_back(style_from_string(s.get<std::string>()));
  }
  if (j.contains("loudnesses")) {
    c.loudnesses.clear();
    for (const auto& l : j.at("loudnesses"))
      c.loudnesses.push_back(loudness_from_string(l.get<std::string>()));
  }
  take(j, "instances", c.instances);
  take(j, "duration_lo_s", c.duration_lo_s);
  take(j, "duration_hi_s", c.duration_hi_s);
  take(j, "tonic_hz", c.tonic_hz);
  take(j, "sample_rate_hz", c.sample_rate_hz);
}

json analysis_to_json(const AnalysisConfig& a) {
  json j;
  j["sample_rate_hz"] = a.sample_rate_hz;
  j["window"] = to_string(a.window_kind);
  j["window_size"] = a.window_size;
  j["fft_size"] = a.fft_size;
  j["hop_size"] = a.hop_size;
  j["peak_threshold_db"] = a.peak_threshold_db;
  j["f0_min_hz"] = a.f0_min_hz;
  j["f0_max_hz"] = a.f0_max_hz;
  j["twm_error_max"] = a.twm_error_max;
  j["harmonic_dev_fraction"] = a.harmonic_dev_fraction;
  j["max_harmonics"] = a.max_harmonics;
  return j;
}

void analysis_from_json(const json& j, AnalysisConfig& a) {
  check_keys(j,
             {"sample_rate_hz", "window", "window_size", "fft_size", "hop_size",
              "peak_threshold_db", "f0_min_hz", "f0_max_hz", "twm_error_max",
              "harmonic_dev_fraction", "max_harmonics"},
             "analysis");
  take(j, "sample_rate_hz", a.sample_rate_hz);
  if (j.contains("window")) a.window_kind = window_kind_from_string(j.at("window").get<std::string>());
  take(j, "window_size", a.window_size);
  take(j, "fft_size", a.fft_size);
  take(j, "hop_size", a.hop_size);
  take(j, "peak_threshold_db", a.peak_threshold_db);
  take(j, "f0_min_hz", a.f0_min_hz);
  take(j, "f0_max_hz", a.f0_max_hz);
  take(j, "twm_error_max", a.twm_error_max);
  take(j, "harmonic_dev_fraction", a.harmonic_dev_fraction);
  take(j, "max_harmonics", a.max_harmonics);
}

// Lenient counterpart of arch_from_json: omitted keys keep their defaults.
void arch_cfg_from_json(const json& j, ArchSpec& a) {
  check_keys(j,
             {"kind", "condition_on_f0", "condition_residual", "latent_dim", "beta", "epochs",
              "batch_size", "lr", "hidden", "leaky_slope", "f0_min_hz", "f0_max_hz"},
             "arch");
  if (j.contains("kind")) a.kind = arch_kind_from_string(j.at("kind").get<std::string>());
  take(j, "condition_on_f0", a.condition_on_f0);
  take(j, "condition_residual", a.condition_residual);
  take(j, "latent_dim", a.latent_dim);
  take(j, "beta", a.beta);
  take(j, "epochs", a.epochs);
  take(j, "batch_size", a.batch_size);
  take(j, "lr", a.lr);
  take(j, "hidden", a.hidden);
  take(j, "leaky_slope", a.leaky_slope);
  take(j, "f0_min_hz", a.f0_min_hz);
  take(j, "f0_max_hz", a.f0_max_hz);
}

json split_to_json(const SplitSpec& s) {
  json j;
  j["train_fraction"] = s.train_fraction;
  j["unit"] = s.unit == SplitSpec::Unit::frame ? "frame" : "instance";
  return j;
}

void split_from_json(const json& j, SplitSpec& s) {
  check_keys(j, {"train_fraction", "unit"}, "split");
  take(j, "train_fraction", s.train_fraction);
  if (j.contains("unit")) {
    const auto u = j.at("unit").get<std::string>();
    if (u == "frame")
      s.unit = SplitSpec::Unit::frame;
    else if (u == "instance")
      s.unit = SplitSpec::Unit::instance;
    else
      throw std::invalid_argument("config: split.unit must be frame or instance");
  }
}

json tsne_to_json(const TsneParams& t) {
  json j;
  j["perplexity"] = t.perplexity;
  j["iters"] = t.iters;
  j["exaggeration"] = t.exaggeration;
  j["exaggeration_iters"] = t.exaggeration_iters;
  j["learning_rate"] = t.learning_rate;
  j["momentum_initial"] = t.momentum_initial;
  j["momentum_final"] = t.momentum_final;
  j["momentum_switch_iter"] = t.momentum_switch_iter;
  return j;
}

void tsne_from_json(const json& j, TsneParams& t) {
  check_keys(j,
             {"perplexity", "iters", "exaggeration", "exaggeration_iters", "learning_rate",
              "momentum_initial", "momentum_final", "momentum_switch_iter"},
             "tsne");
  take(j, "perplexity", t.perplexity);
  take(j, "iters", t.iters);
  take(j, "exaggeration", t.exaggeration);
  take(j, "exaggeration_iters", t.exaggeration_iters);
  take(j, "learning_rate", t.learning_rate);
  take(j, "momentum_initial", t.momentum_initial);
  take(j, "momentum_final", t.momentum_final);
  take(j, "momentum_switch_iter", t.momentum_switch_iter);
}

json config_to_json(const CliConfig& cfg) {
  json j;
  j["version"] = cfg.version;
  j["master_seed"] = cfg.master_seed;
  j["out_dir"] = cfg.out_dir;
  j["corpus"] = corpus_to_json(cfg.corpus);
  j["analysis"] = analysis_to_json(cfg.analysis);
  j["arch"] = arch_to_json(cfg.arch);
  j["split"] = split_to_json(cfg.split);
  j["tsne"] = tsne_to_json(cfg.tsne);
  json e;
  e["max_points"] = cfg.eval_max_points;
  e["octaves"] = json::array();
  for (const auto o : cfg.eval_octaves) e["octaves"].push_back(to_string(o));
  e["study"] = cfg.study;
  e["study_seeds"] = cfg.study_seeds;
  j["eval"] = e;
  json p;
  p["corpus_dir"] = cfg.corpus_dir;
  p["features"] = cfg.features_path;
  p["model_dir"] = cfg.model_dir;
  p["model_dirs"] = cfg.model_dirs;
  p["wav"] = cfg.wav_path;
  j["paths"] = p;
  return j;
}

void config_from_json(const json& j, CliConfig& cfg) {
  check_keys(j,
             {"version", "master_seed", "out_dir", "corpus", "analysis", "arch", "split", "tsne",
              "eval", "paths"},
             "config");
  take(j, "version", cfg.version);
  if (cfg.version != 1) throw std::invalid_argument("config: unsupported version");
  take(j, "master_seed", cfg.master_seed);
  take(j, "out_dir", cfg.out_dir);
  if (j.contains("corpus")) corpus_from_json(j.at("corpus"), cfg.corpus);
  if (j.contains("analysis")) analysis_from_json(j.at("analysis"), cfg.analysis);
  if (j.contains("arch")) arch_cfg_from_json(j.at("arch"), cfg.arch);
  if (j.contains("split")) split_from_json(j.at("split"), cfg.split);
  if (j.contains("tsne")) tsne_from_json(j.at("tsne"), cfg.tsne);
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    check_keys(e, {"max_points", "octaves", "study", "study_seeds"}, "eval");
    take(e, "max_points", cfg.eval_max_points);
    if (e.contains("octaves")) {
      cfg.eval_octaves.clear();
      for (const auto& o : e.at("octaves"))
        cfg.eval_octaves.push_back(octave_from_string(o.get<std::string>()));
    }
    take(e, "study", cfg.study);
    take(e, "study_seeds", cfg.study_seeds);
  }
  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    check_keys(p, {"corpus_dir", "features", "model_dir", "model_dirs", "wav"}, "paths");
    take(p, "corpus_dir", cfg.corpus_dir);
    take(p, "features", cfg.features_path);
    take(p, "model_dir", cfg.model_dir);
    take(p, "model_dirs", cfg.model_dirs);
    take(p, "wav", cfg.wav_path);
  }
}

CliConfig load_config(const std::string& path) {
  CliConfig cfg = default_config();
  if (path.empty()) return cfg;
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  config_from_json(j, cfg);
  return cfg;
}

void write_snapshot(const CliConfig& cfg, const std::string& command) {
  fs::create_directories(cfg.out_dir);
  const auto path = fs::path(cfg.out_dir) / (command + "_config.json");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write config snapshot: " + path.string());
  out << config_to_json(cfg).dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Commands.

int cmd_gen(CliConfig cfg) {
  cfg.corpus_dir = resolve_corpus_dir(cfg);
  cfg.corpus.seed = derive_seed(cfg.master_seed, kSeedGen);
  write_snapshot(cfg, "gen");
  const auto entries = build_corpus(cfg.corpus, cfg.corpus_dir);
  std::cout << "gen: wrote " << entries.size() << " notes to " << cfg.corpus_dir << "\n";
  return 0;
}

std::vector<std::string> corpus_files(const std::string& dir) {
  std::vector<std::string> files;
  const auto manifest = fs::path(dir) / "manifest.csv";
  if (fs::exists(manifest)) {
    std::ifstream in(manifest);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto fields = split_csv_line(line);
      if (!fields.empty()) files.push_back((fs::path(dir) / fields[0]).string());
    }
  } else {
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.path().extension() == ".wav") files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
  }
  return files;
}

int cmd_analyze(CliConfig cfg) {
  cfg.corpus_dir = resolve_corpus_dir(cfg);
  cfg.features_path = resolve_features_path(cfg);
  write_snapshot(cfg, "analyze");

  if (!fs::is_directory(cfg.corpus_dir)) throw DataError("no corpus at " + cfg.corpus_dir);
  const auto files = corpus_files(cfg.corpus_dir);
  if (files.empty()) throw DataError("corpus has no wav files: " + cfg.corpus_dir);

  const auto feat_dir = fs::path(cfg.features_path).parent_path();
  fs::create_directories(feat_dir);

  FeatureTable all;
  std::vector<std::string> failures;
  for (const auto& file : files) {
    try {
      const auto wav = read_wav(file);
      NoteRecord rec;
      rec.meta = parse_note_filename(file);
      rec.note_id = note_stem(file);
      rec.samples = wav.samples;
      rec.sample_rate_hz = wav.sample_rate_hz;
      const auto na = analyze_note(rec, cfg.analysis);
      const auto rows = to_features(na);
      write_features_csv((feat_dir / (rec.note_id + ".csv")).string(), rows);
      all.insert(all.end(), rows.begin(), rows.end());
      if (!na.skipped_centers.empty())
        std::cerr << "analyze: " << rec.note_id << ": skipped " << na.skipped_centers.size()
                  << " frames without a stable pitch\n";
    } catch (const DataError& e) {
      failures.push_back(fs::path(file).filename().string() + ": " + e.what());
    }
  }

  std::ofstream flog(feat_dir / "failures.txt", std::ios::binary);
  for (const auto& f : failures) flog << f << "\n";
  for (const auto& f : failures) std::cerr << "analyze: failed " << f << "\n";

  if (all.empty()) throw DataError("analyze: no note produced any frames");
  write_features_csv(cfg.features_path, all);
  std::cout << "analyze: " << all.size() << " frames from " << files.size() - failures.size()
            << " notes (" << failures.size() << " failures) -> " << cfg.features_path << "\n";
  return 0;
}

int cmd_train(CliConfig cfg) {
  cfg.features_path = resolve_features_path(cfg);
  cfg.model_dir = resolve_model_dir(cfg);
  write_snapshot(cfg, "train");

  const auto rows = read_features_csv(cfg.features_path);
  SplitSpec split_spec = cfg.split;
  split_spec.seed = derive_seed(cfg.master_seed, kSeedSplit);
  const auto split = make_split(rows, split_spec);
  const auto model = train_model(rows, cfg.arch, split, derive_seed(cfg.master_seed, kSeedTrain));
  save_model(cfg.model_dir, model);

  double train_loss = 0.0, test_loss = 0.0;
  for (const auto& curve : model.curves) {
    train_loss += curve.train.back();
    test_loss += curve.test.back();
  }
  std::cout << "train: " << to_string(cfg.arch.kind) << " for " << cfg.arch.epochs
            << " epochs on " << split.train.size() << "/" << split.test.size()
            << " frames; final loss train " << format_float(train_loss) << " test "
            << format_float(test_loss) << " -> " << cfg.model_dir << "\n";
  return 0;
}

int cmd_reconstruct(CliConfig cfg) {
  if (cfg.wav_path.empty()) throw std::invalid_argument("reconstruct: --wav is required");
  if (cfg.model_dirs.empty()) cfg.model_dirs.push_back(resolve_model_dir(cfg));
  write_snapshot(cfg, "reconstruct");

  const auto model = load_model(cfg.model_dirs.front());
  const auto wav = read_wav(cfg.wav_path);
  NoteRecord rec;
  rec.meta = parse_note_filename(cfg.wav_path);
  rec.note_id = note_stem(cfg.wav_path);
  rec.samples = wav.samples;
  rec.sample_rate_hz = wav.sample_rate_hz;

  AnalysisConfig analysis = cfg.analysis;
  analysis.sample_rate_hz = wav.sample_rate_hz;
  const auto na = analyze_note(rec, analysis);
  const auto rows = to_features(na);
  const auto recon = reconstruct(model, rows);

  const std::uint64_t seed = derive_seed(cfg.master_seed, kSeedResynth);
  const auto model_out = resynthesize(na, analysis, seed, &recon.cc_h, &recon.cc_r);
  const auto pass_out = resynthesize(na, analysis, seed);

  const auto dir = fs::path(cfg.out_dir) / "recon";
  fs::create_directories(dir);
  write_wav((dir / (rec.note_id + "_model.wav")).string(), model_out.samples,
            wav.sample_rate_hz);
  write_wav((dir / (rec.note_id + "_pass.wav")).string(), pass_out.samples, wav.sample_rate_hz);
  dump_envelopes((dir / (rec.note_id + "_env")).string(), na, analysis);

  std::cout << "reconstruct: " << rec.note_id << ": " << na.frames.size() << " frames, "
            << model_out.samples.size() << " samples starting at " << model_out.start_sample
            << " -> " << dir.string() << "\n";
  return 0;
}

int cmd_eval(CliConfig cfg) {
  cfg.features_path = resolve_features_path(cfg);
  if (cfg.model_dirs.empty() && !cfg.study && cfg.wav_path.empty())
    throw std::invalid_argument("eval: need at least one --model, or --study, or --dump-wav");
  write_snapshot(cfg, "eval");

  const auto rows = read_features_csv(cfg.features_path);
  const auto dir = fs::path(cfg.out_dir) / "eval";
  fs::create_directories(dir);

  const auto in_octaves = [&](const std::string& note_id) {
    if (cfg.eval_octaves.empty()) return true;
    const auto oct = parse_note_filename(note_id).octave;
    return std::find(cfg.eval_octaves.begin(), cfg.eval_octaves.end(), oct) !=
           cfg.eval_octaves.end();
  };

  std::vector<std::pair<std::string, MseReport>> reports;
  std::ofstream sil(dir / "silhouettes.csv", std::ios::binary);
  sil << "model,stream,silhouette,points\n";

  for (std::size_t m = 0; m < cfg.model_dirs.size(); ++m) {
    const auto model = load_model(cfg.model_dirs[m]);
    std::string name = to_string(model.arch.kind);
    for (const auto& [existing, report] : reports)
      if (existing == name) name += "_" + std::to_string(m);

    // reports stay on the model's own test rows, octave-filtered
    std::vector<std::size_t> eval_idx;
    for (const std::size_t j : model.split.test)
      if (j < rows.size() && in_octaves(rows[j].note_id)) eval_idx.push_back(j);
    if (eval_idx.empty()) throw DataError("eval: no test rows in the requested octaves");
    const auto report = mse_report(model, rows, eval_idx);
    for (const auto& missing : report.missing_notes)
      std::cerr << "eval: " << name << ": note " << missing << " has no frames, omitted\n";
    reports.push_back({name, report});

    // latent embedding per network stream
    const auto sub_idx = embed_subsample(eval_idx.size(), cfg.eval_max_points);
    FeatureTable sub;
    std::vector<int> labels;
    for (const std::size_t k : sub_idx) {
      sub.push_back(rows[eval_idx[k]]);
      labels.push_back(svara_label(sub.back().note_id));
    }
    const auto codes = latent_codes(model, sub);
    const auto streams = model.arch.stream_names();
    for (std::size_t s = 0; s < codes.size(); ++s) {
      TsneParams tp = cfg.tsne;
      tp.seed = derive_seed(derive_seed(cfg.master_seed, kSeedEmbed), m * 8 + s);
      const auto se = embed_latent(codes[s], labels, tp);
      write_embedding_csv((dir / ("embed_" + name + "_" + streams[s] + ".csv")).string(),
                          se.table);
      sil << name << "," << streams[s] << "," << format_float(se.silhouette) << ","
          << se.table.labels.size() << "\n";
    }
  }
  if (!reports.empty()) {
    write_mse_csv((dir / "mse.csv").string(), reports);
    std::cout << "eval: wrote mse.csv over " << reports.size() << " model(s)\n";
  }

  if (cfg.study) {
    FeatureTable study_rows;
    for (const auto& row : rows)
      if (in_octaves(row.note_id)) study_rows.push_back(row);
    if (study_rows.empty()) throw DataError("eval: no rows in the requested octaves");
    SplitSpec split_spec = cfg.split;
    split_spec.seed = derive_seed(cfg.master_seed, kSeedSplit);
    const auto split = make_split(study_rows, split_spec);

    std::ofstream ssil(dir / "study_silhouettes.csv", std::ios::binary);
    ssil << "seed,embedding,silhouette\n";
    for (int k = 0; k < cfg.study_seeds; ++k) {
      const std::uint64_t seed = derive_seed(derive_seed(cfg.master_seed, kSeedStudy),
                                             std::uint64_t(k));
      const auto study = conditioning_study(study_rows, cfg.arch, split, seed, cfg.tsne,
                                            cfg.eval_max_points, true);
      const auto tag = "seed" + std::to_string(k);
      write_embedding_csv((dir / ("study_" + tag + "_uncond.csv")).string(),
                          study.harmonic_unconditioned.table);
      write_embedding_csv((dir / ("study_" + tag + "_cond.csv")).string(),
                          study.harmonic_conditioned.table);
      write_embedding_csv((dir / ("study_" + tag + "_residual.csv")).string(),
                          study.residual_unconditioned->table);
      ssil << k << ",uncond," << format_float(study.harmonic_unconditioned.silhouette) << "\n";
      ssil << k << ",cond," << format_float(study.harmonic_conditioned.silhouette) << "\n";
      ssil << k << ",residual," << format_float(study.residual_unconditioned->silhouette)
           << "\n";
      std::cout << "eval: study seed " << k << " silhouettes uncond "
                << format_float(study.harmonic_unconditioned.silhouette) << " cond "
                << format_float(study.harmonic_conditioned.silhouette) << " residual "
                << format_float(study.residual_unconditioned->silhouette) << "\n";
    }
  }

  if (!cfg.wav_path.empty()) {
    const auto wav = read_wav(cfg.wav_path);
    NoteRecord rec;
    rec.meta = parse_note_filename(cfg.wav_path);
    rec.note_id = note_stem(cfg.wav_path);
    rec.samples = wav.samples;
    rec.sample_rate_hz = wav.sample_rate_hz;
    AnalysisConfig analysis = cfg.analysis;
    analysis.sample_rate_hz = wav.sample_rate_hz;
    const auto na = analyze_note(rec, analysis);
    dump_envelopes((dir / ("envelopes_" + rec.note_id)).string(), na, analysis);
    std::cout << "eval: dumped " << na.frames.size() << " envelope frames for " << rec.note_id
              << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"harmonic-plus-residual envelope modeling pipeline"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string out_dir, corpus_dir, features_path, model_dir, wav_path, arch_kind, octaves_csv;
  std::vector<std::string> model_dirs;
  std::uint64_t master_seed = 0;
  bool has_seed = false;
  int epochs = -1;
  bool study = false;

  app.add_option("--config", config_path, "JSON config file; omitted keys use defaults")
      ->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "output directory (default from config)");
  app.add_option("--seed", master_seed, "master seed overriding the config")
      ->each([&](const std::string&) { has_seed = true; });

  auto* gen = app.add_subcommand("gen", "synthesize the note corpus");
  gen->add_option("--corpus-dir", corpus_dir, "corpus output directory");

  auto* analyze = app.add_subcommand("analyze", "extract per-frame envelope features");
  analyze->add_option("--corpus-dir", corpus_dir, "corpus directory to read");
  analyze->add_option("--features", features_path, "combined features csv path");

  auto* train = app.add_subcommand("train", "train one architecture on the features");
  train->add_option("--features", features_path, "features csv path");
  train->add_option("--arch", arch_kind, "architecture: inet, concat, or jnet");
  train->add_option("--model-dir", model_dir, "model bundle output directory");
  train->add_option("--epochs", epochs, "override training epochs");

  auto* reconstruct = app.add_subcommand("reconstruct", "resynthesize one note through a model");
  reconstruct->add_option("--model", model_dirs, "model bundle directory");
  reconstruct->add_option("--wav", wav_path, "input note wav");

  auto* eval = app.add_subcommand("eval", "reconstruction error and latent embeddings");
  eval->add_option("--features", features_path, "features csv path");
  eval->add_option("--model", model_dirs, "model bundle directory (repeatable)");
  eval->add_option("--octaves", octaves_csv, "restrict to octaves, e.g. U or L,M");
  eval->add_flag("--study", study, "run the pitch-conditioning study");
  eval->add_option("--dump-wav", wav_path, "analyze this wav and dump its envelopes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    CliConfig cfg;
    // Resolving the invocation: bad config values and bad flag values are
    // both usage errors, whatever the library-level exception type.
    try {
      cfg = load_config(config_path);
      if (!out_dir.empty()) cfg.out_dir = out_dir;
      if (has_seed) cfg.master_seed = master_seed;
      if (!corpus_dir.empty()) cfg.corpus_dir = corpus_dir;
      if (!features_path.empty()) cfg.features_path = features_path;
      if (!model_dir.empty()) cfg.model_dir = model_dir;
      if (!model_dirs.empty()) cfg.model_dirs = model_dirs;
      if (!wav_path.empty()) cfg.wav_path = wav_path;
      if (!arch_kind.empty()) cfg.arch.kind = arch_kind_from_string(arch_kind);
      if (epochs >= 0) cfg.arch.epochs = epochs;
      if (study) cfg.study = true;
      if (!octaves_csv.empty()) {
      cfg.eval_octaves.clear();
      std::size_t start = 0;
      while (start <= octaves_csv.size()) {
        const auto comma = octaves_csv.find(',', start);
        const auto part = octaves_csv.substr(
            start, comma == std::string::npos ? std::string::npos : comma - start);
        if (!part.empty()) cfg.eval_octaves.push_back(octave_from_string(part));
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
      }
      // Snapshots must replay from any cwd, so pin every path down now.
      const auto absolutize = [](std::string& p) {
      if (!p.empty()) p = fs::absolute(p).lexically_normal().string();
      };
      absolutize(cfg.out_dir);
      absolutize(cfg.corpus_dir);
      absolutize(cfg.features_path);
      absolutize(cfg.model_dir);
      for (auto& d : cfg.model_dirs) absolutize(d);
      absolutize(cfg.wav_path);

      cfg.analysis.validate();
      cfg.arch.validate();
    } catch (const DataError& e) {
      throw std::invalid_argument(e.what());
    }

    if (gen->parsed()) return cmd_gen(std::move(cfg));
    if (analyze->parsed()) return cmd_analyze(std::move(cfg));
    if (train->parsed()) return cmd_train(std::move(cfg));
    if (reconstruct->parsed()) return cmd_reconstruct(std::move(cfg));
    if (eval->parsed()) return cmd_eval(std::move(cfg));
    return 1;
  } catch (const DivergenceError& e) {
    std::cerr << "error: training diverged at epoch " << e.epoch << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
