// SPDX-License-Identifier: Apache-2.0
#include "lrc_cli.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "lrc/eval_stats.hpp"
#include "lrc/preprocess.hpp"
#include "lrc/vae/train.hpp"

namespace lrc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::optional<fs::path> opt_path(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return fs::path(j.at(key).get<std::string>());
}

std::vector<fs::path> path_list(const json& j, const char* key) {
  std::vector<fs::path> out;
  if (j.contains(key))
    for (const auto& p : j.at(key)) out.emplace_back(p.get<std::string>());
  return out;
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    require(ok, Errc::usage, "unknown key '" + k + "' in " + where);
  }
}

fs::path stem_in(const fs::path& dir, const std::string& name) { return dir / name; }

void require_exists(const fs::path& scene_or_file, bool scene) {
  const fs::path p = scene ? sidecar_path(scene_or_file) : scene_or_file;
  require(fs::exists(p), Errc::usage, "missing input: " + p.string());
}

fs::path pre_path(const RunConfig& c) { return c.paths.pre.value_or(stem_in(c.paths.scenes(), "pre")); }
fs::path post_path(const RunConfig& c) { return c.paths.post.value_or(stem_in(c.paths.scenes(), "post")); }
fs::path labels_path(const RunConfig& c) { return c.paths.labels.value_or(c.paths.scenes() / "labels.json"); }
fs::path checkpoint_path(const RunConfig& c) { return c.paths.checkpoint.value_or(c.paths.checkpoints() / "model.ckpt"); }
fs::path preprocess_path(const RunConfig& c) {
  return c.paths.preprocess.value_or(c.paths.checkpoints() / "preprocess.json");
}

std::vector<fs::path> numbered(const fs::path& dir, const std::string& prefix, std::size_t n) {
  std::vector<fs::path> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(dir / (prefix + std::to_string(i)));
  return out;
}

std::vector<fs::path> history_paths(const RunConfig& c) {
  return c.paths.history.empty() ? numbered(c.paths.scenes(), "history_", c.synth.n_history) : c.paths.history;
}

std::string method_file(Method m) {
  std::string s(to_string(m));
  for (char& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}

std::uint64_t root_seed(const RunConfig& c) {
  if (c.seed) return *c.seed;
  require(!c.deterministic, Errc::usage, "deterministic runs need a seed");
  return std::random_device{}();
}

}  // namespace

// ---------------------------------------------------------------------------

RunConfig parse_run_config(const json& j) {
  RunConfig c;
  try {
    require(j.is_object(), Errc::usage, "run config must be a JSON object");
    check_keys(j, {"seed", "deterministic", "threads", "paths", "synth", "preprocess", "train", "score", "eval"},
               "run config");
    if (j.contains("seed") && !j.at("seed").is_null()) c.seed = j.at("seed").get<std::uint64_t>();
    c.deterministic = j.value("deterministic", c.deterministic);
    c.threads = j.value("threads", c.threads);
    if (j.contains("paths")) {
      const json& p = j.at("paths");
      check_keys(p, {"out", "pre", "post", "labels", "checkpoint", "preprocess", "nominal_pre", "nominal_post",
                     "alignment_samples", "history", "nominal_history", "train_scenes"},
                 "paths");
      if (p.contains("out")) c.paths.out = p.at("out").get<std::string>();
      c.paths.pre = opt_path(p, "pre");
      c.paths.post = opt_path(p, "post");
      c.paths.labels = opt_path(p, "labels");
      c.paths.checkpoint = opt_path(p, "checkpoint");
      c.paths.preprocess = opt_path(p, "preprocess");
      c.paths.nominal_pre = opt_path(p, "nominal_pre");
      c.paths.nominal_post = opt_path(p, "nominal_post");
      c.paths.alignment_samples = opt_path(p, "alignment_samples");
      c.paths.history = path_list(p, "history");
      c.paths.nominal_history = path_list(p, "nominal_history");
      c.paths.train_scenes = path_list(p, "train_scenes");
    }
    if (j.contains("synth")) {
      json s = j.at("synth");
      c.n_nominal = s.value("n_nominal", c.n_nominal);
      s.erase("n_nominal");
      c.synth = s.get<SynthConfig>();
    }
    if (j.contains("preprocess")) {
      const json& p = j.at("preprocess");
      check_keys(p, {"epsilon", "alignment_samples"}, "preprocess");
      c.epsilon = p.value("epsilon", c.epsilon);
      if (auto a = opt_path(p, "alignment_samples")) c.paths.alignment_samples = a;
    }
    if (j.contains("train")) {
      json t = j.at("train");
      if (t.contains("encoder")) c.encoder = t.at("encoder").get<vae::EncoderConfig>();
      c.max_train_tiles = t.value("max_tiles", c.max_train_tiles);
      t.erase("encoder");
      t.erase("max_tiles");
      c.train = t.get<vae::TrainConfig>();
    }
    if (j.contains("score")) {
      const json& s = j.at("score");
      check_keys(s, {"methods", "config_tag", "checkpoint", "cva", "pgm"}, "score");
      if (s.contains("methods")) {
        c.methods.clear();
        for (const auto& m : s.at("methods")) c.methods.push_back(parse_method(m.get<std::string>()));
      }
      if (s.contains("config_tag")) c.config_tag = parse_config_tag(s.at("config_tag").get<std::string>());
      if (auto p = opt_path(s, "checkpoint")) c.paths.checkpoint = p;
      if (s.contains("cva")) {
        const auto v = s.at("cva").get<std::string>();
        require(v == "mean" || v == "max", Errc::usage, "score.cva must be 'mean' or 'max'");
        c.cva = v == "mean" ? CvaAggregate::mean : CvaAggregate::max;
      }
      c.write_pgm = s.value("pgm", c.write_pgm);
    }
    if (j.contains("eval")) {
      const json& e = j.at("eval");
      check_keys(e, {"n_boot", "reference", "site"}, "eval");
      c.n_boot = e.value("n_boot", c.n_boot);
      if (e.contains("reference")) c.reference = parse_method(e.at("reference").get<std::string>());
      c.site = e.value("site", c.site);
    }
  } catch (const json::exception& e) {
    fail(Errc::usage, std::string("invalid run config: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), Errc::usage, "cannot read config " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    fail(Errc::usage, "malformed config " + path.string() + ": " + e.what());
  }
  return parse_run_config(j);
}

// ---------------------------------------------------------------------------

int cmd_synth(const RunConfig& cfg, std::ostream& log) {
  SynthConfig sc = cfg.synth;
  sc.seed = root_seed(cfg);
  sc.validate();
  const fs::path dir = cfg.paths.scenes();
  fs::create_directories(dir);

  const ScenePair pair = gen_scene_pair(sc);
  save_scene(pair.pre, dir / "pre");
  save_scene(pair.post, dir / "post");
  save_labels(pair.labels, dir / "labels.json");
  for (std::size_t i = 0; i < pair.history.size(); ++i) save_scene(pair.history[i], dir / ("history_" + std::to_string(i)));

  // Burn-free pair with the same nuisance model, for threshold calibration.
  SynthConfig calib = sc;
  calib.n_burns = 0;
  calib.seed = substream_seed(sc.seed, "synth.calibration");
  const ScenePair cp = gen_scene_pair(calib);
  save_scene(cp.pre, dir / "calib_pre");
  save_scene(cp.post, dir / "calib_post");
  for (std::size_t i = 0; i < cp.history.size(); ++i)
    save_scene(cp.history[i], dir / ("calib_history_" + std::to_string(i)));

  for (std::size_t i = 0; i < cfg.n_nominal; ++i)
    save_scene(gen_nominal_scene(sc, i), dir / ("nominal_" + std::to_string(i)));

  json prov = sc;
  prov["n_nominal"] = cfg.n_nominal;
  std::ofstream(dir / "synth_config.json") << prov.dump(2) << '\n';
  log << "synth: " << pair.labels.positives() << " of " << pair.labels.labels.size() << " tiles burned, wrote "
      << dir.string() << '\n';
  return kExitOk;
}

namespace {

SpectralAlignParams fit_alignment(const fs::path& path, std::size_t bands) {
  std::ifstream is(path);
  require(static_cast<bool>(is), Errc::usage, "cannot read alignment samples " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    fail(Errc::format, "malformed alignment samples: " + std::string(e.what()));
  }
  const auto x = j.at("x").get<std::vector<std::vector<double>>>();
  const auto y = j.at("y").get<std::vector<std::vector<double>>>();
  require(x.size() == bands && y.size() == bands, Errc::domain, "alignment samples need one list per band");
  SpectralAlignParams p;
  for (std::size_t b = 0; b < bands; ++b) {
    const LinearFit f = fit_ma_regression(x[b], y[b]);
    p.gain.push_back(f.gain);
    p.offset.push_back(f.offset);
  }
  return p;
}

}  // namespace

int cmd_train(const RunConfig& cfg, std::ostream& log) {
  const std::vector<fs::path> sources =
      cfg.paths.train_scenes.empty() ? numbered(cfg.paths.scenes(), "nominal_", cfg.n_nominal) : cfg.paths.train_scenes;
  require(!sources.empty(), Errc::usage, "no training scenes");
  for (const auto& p : sources) require_exists(p, true);
  if (cfg.paths.alignment_samples) require_exists(*cfg.paths.alignment_samples, false);

  std::vector<SceneRaster> scenes;
  for (const auto& p : sources) scenes.push_back(load_scene(p));
  const std::size_t bands = scenes.front().header.bands;

  PreprocessParams pp;
  pp.align = cfg.paths.alignment_samples ? fit_alignment(*cfg.paths.alignment_samples, bands)
                                         : SpectralAlignParams::identity(bands);
  std::vector<SceneRaster> aligned;
  for (const auto& s : scenes) aligned.push_back(apply_spectral_alignment(s, pp.align));
  pp.norm = fit_normalization(aligned, cfg.epsilon);

  vae::EncoderConfig ec = cfg.encoder;
  ec.input_bands = bands;
  std::vector<Tile> tiles;
  for (const auto& s : aligned) {
    const TileGrid grid = tile_scene(apply_lognorm(s, pp.norm), ec.tile_size);
    for (const Tile& t : grid.tiles)
      if (!t.excluded && (cfg.max_train_tiles == 0 || tiles.size() < cfg.max_train_tiles)) tiles.push_back(t);
  }

  vae::TrainConfig tc = cfg.train;
  tc.seed = root_seed(cfg);
  tc.deterministic = cfg.deterministic;
  tc.threads = cfg.threads;

  const fs::path dir = cfg.paths.checkpoints();
  fs::create_directories(dir);
  save_preprocess_params(pp, preprocess_path(cfg));
  log << "train: " << tiles.size() << " tiles, " << tc.epochs << " epochs\n";
  try {
    const vae::Checkpoint ckpt = vae::train(tiles, {}, ec, tc);
    save_checkpoint(ckpt, checkpoint_path(cfg));
    save_loss_history(ckpt.history, dir / "loss_history.csv");
    if (!ckpt.history.empty())
      log << "train: best epoch " << ckpt.best_epoch << ", validation loss "
          << ckpt.history[ckpt.best_epoch - 1].validation.total << '\n';
  } catch (const vae::TrainingDiverged& e) {
    save_loss_history(e.history(), dir / "loss_history.csv");
    throw;
  }
  return kExitOk;
}

namespace {

struct ScenesForScoring {
  SceneRaster pre, post;
  std::vector<SceneRaster> history;
};

ScenesForScoring load_for_scoring(const fs::path& pre, const fs::path& post, const std::vector<fs::path>& history,
                                  const PreprocessParams& pp) {
  ScenesForScoring s;
  s.pre = preprocess_scene(load_scene(pre), pp);
  s.post = preprocess_scene(load_scene(post), pp);
  for (const auto& h : history) s.history.push_back(preprocess_scene(load_scene(h), pp));
  return s;
}

ScoreMap score_loaded(const ScenesForScoring& s, Method m, const RunConfig& cfg, const vae::VaeParams<float>* params,
                      std::uint64_t seed) {
  ScoreOptions so;
  so.params = params;
  so.config_tag = cfg.config_tag;
  so.cva = cfg.cva;
  so.threads = cfg.threads;
  so.irmad.seed = substream_seed(seed, "irmad");
  if (params) so.tile_size = params->config.tile_size;
  for (const auto& h : s.history) so.history.push_back(&h);
  return score_scene(s.pre, s.post, m, so);
}

}  // namespace

int cmd_score(const RunConfig& cfg, std::ostream& log) {
  const bool series = cfg.config_tag == ConfigTag::time_series;
  const fs::path pre = pre_path(cfg), post = post_path(cfg);
  require_exists(pre, true);
  require_exists(post, true);
  require_exists(preprocess_path(cfg), false);
  const std::vector<fs::path> history = series ? history_paths(cfg) : std::vector<fs::path>{};
  require(!series || !history.empty(), Errc::usage, "time-series scoring needs pre-incident history scenes");
  for (const auto& h : history) require_exists(h, true);

  const bool needs_model = std::find(cfg.methods.begin(), cfg.methods.end(), Method::lrc) != cfg.methods.end();
  std::optional<vae::Checkpoint> ckpt;
  if (needs_model) {
    require(fs::exists(checkpoint_path(cfg)), Errc::usage, "LRC scoring needs a checkpoint: " + checkpoint_path(cfg).string());
    ckpt = vae::load_checkpoint(checkpoint_path(cfg));
  }
  const std::uint64_t seed = root_seed(cfg);
  const PreprocessParams pp = load_preprocess_params(preprocess_path(cfg));
  if (ckpt)
    require(ckpt->params.config.input_bands == pp.norm.bands(), Errc::checkpoint,
            "checkpoint and preprocessing disagree on band count");

  const ScenesForScoring target = load_for_scoring(pre, post, history, pp);

  const fs::path npre = cfg.paths.nominal_pre.value_or(cfg.paths.scenes() / "calib_pre");
  const fs::path npost = cfg.paths.nominal_post.value_or(cfg.paths.scenes() / "calib_post");
  const std::vector<fs::path> nhist =
      !series ? std::vector<fs::path>{}
              : (cfg.paths.nominal_history.empty() ? numbered(cfg.paths.scenes(), "calib_history_", history.size())
                                                   : cfg.paths.nominal_history);
  bool have_nominal = fs::exists(sidecar_path(npre)) && fs::exists(sidecar_path(npost));
  for (const auto& h : nhist) have_nominal = have_nominal && fs::exists(sidecar_path(h));
  std::optional<ScenesForScoring> nominal;
  if (have_nominal) nominal = load_for_scoring(npre, npost, nhist, pp);

  const fs::path dir = cfg.paths.scores();
  fs::create_directories(dir);
  for (Method m : cfg.methods) {
    const vae::VaeParams<float>* params = m == Method::lrc ? &ckpt->params : nullptr;
    ScoreMap map = score_loaded(target, m, cfg, params, seed);
    const std::string stem = method_file(m);
    if (nominal) {
      const ScoreMap nmap = score_loaded(*nominal, m, cfg, params, seed);
      save_score_map(nmap, dir / (stem + "_nominal.json"));
      const ThresholdResult th = threshold_at_95(nmap.scores, map);
      map.threshold = th.tau;
      if (cfg.write_pgm) {
        ScoreMap flagged = map;
        for (std::size_t i = 0; i < flagged.scores.size(); ++i)
          if (!ScoreMap::excluded(flagged.scores[i])) flagged.scores[i] = th.flagged[i] ? 1.0 : 0.0;
        export_pgm(flagged, dir / (stem + "_flagged.pgm"));
      }
    }
    save_score_map(map, dir / (stem + ".json"));
    if (cfg.write_pgm) export_pgm(map, dir / (stem + ".pgm"));
    log << "score: " << to_string(m) << " -> " << (dir / (stem + ".json")).string() << '\n';
  }
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg, std::ostream& log) {
  require_exists(labels_path(cfg), false);
  const SceneLabels labels = load_labels(labels_path(cfg));
  std::map<Method, LabeledScores> per_method;
  std::map<Method, double> thresholds;
  for (Method m : cfg.methods) {
    const fs::path p = cfg.paths.scores() / (method_file(m) + ".json");
    require_exists(p, false);
    const ScoreMap map = load_score_map(p);
    require(map.rows == labels.rows && map.cols == labels.cols, Errc::pairing,
            "score map " + p.string() + " does not match the label grid");
    per_method[m] = labeled_from_map(map, labels.labels, cfg.site);
    if (map.threshold) thresholds[m] = *map.threshold;
  }
  require(!per_method.empty(), Errc::usage, "no methods to evaluate");
  const Method reference = cfg.reference.value_or(per_method.contains(Method::irmad) ? Method::irmad
                                                                                     : per_method.begin()->first);
  require(per_method.contains(reference), Errc::usage, "reference method was not scored");

  CompareOptions opt;
  opt.n_boot = cfg.n_boot;
  opt.seed = root_seed(cfg);
  opt.threads = cfg.threads;
  opt.thresholds = thresholds;
  const EvalReport report = compare_methods(per_method, reference, opt, cfg.site, cfg.config_tag);

  const fs::path dir = cfg.paths.reports();
  fs::create_directories(dir);
  save_reports_json({report}, dir / "report.json");
  save_reports_csv({report}, dir / "report.csv");
  log << "eval: wrote " << (dir / "report.json").string() << '\n';
  return kExitOk;
}

namespace {

std::string cell(const std::optional<double>& v, int prec = 2) {
  if (!v) return "n/a";
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << *v;
  return os.str();
}

std::string cell_ci(const std::optional<Interval>& i) {
  if (!i) return "n/a";
  return cell(i->median) + " [" + cell(i->lo) + ", " + cell(i->hi) + "]";
}

std::string cell_flag(const Flagged& f, int prec) {
  if (f.value) return cell(f.value, prec);
  return f.note.empty() ? "n/a" : f.note;
}

}  // namespace

int cmd_report(const RunConfig& cfg, std::ostream& log) {
  const fs::path in = cfg.paths.reports() / "report.json";
  require_exists(in, false);
  std::ostringstream os;
  for (const EvalReport& r : load_reports_json(in)) {
    os << "## " << r.site << " (" << to_string(r.config_tag) << "), reference " << to_string(r.reference) << ", "
       << r.n_boot << " bootstrap resamples\n\n";
    os << "| Method | AUPRC | Precision | Recall | F1 | p vs ref | Cohen's d | Rel. improvement |\n";
    os << "|---|---|---|---|---|---|---|---|\n";
    for (const MethodReport& row : r.rows) {
      const auto d = row.cohens_d.find("auprc");
      os << "| " << to_string(row.method) << " | " << cell_ci(row.auprc) << " | " << cell_ci(row.precision) << " | "
         << cell_ci(row.recall) << " | " << cell_ci(row.f1) << " | " << cell_flag(row.p_vs_reference, 4) << " | "
         << (d == row.cohens_d.end() ? std::string("n/a") : cell_flag(d->second, 2)) << " | ";
      if (row.rel_improvement.value)
        os << cell(*row.rel_improvement.value * 100.0, 1) << "%";
      else
        os << cell_flag(row.rel_improvement, 2);
      os << " |\n";
    }
    os << '\n';
  }
  std::ofstream(cfg.paths.reports() / "table.md") << os.str();
  log << os.str();
  return kExitOk;
}

// ---------------------------------------------------------------------------

namespace {

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::divergence:
    case Errc::degenerate:
    case Errc::no_signal:
      return kExitNumeric;
    default:
      return kExitUsage;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Latent representation change detection for multispectral scene pairs"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  bool deterministic = false;
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "root seed for every random stream");
  app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--deterministic", deterministic, "require a seed; outputs are bitwise reproducible");
  app.add_option("--out", out_dir, "output directory");
  auto* synth = app.add_subcommand("synth", "generate a synthetic scene pair, calibration pair and nominal scenes");
  auto* train = app.add_subcommand("train", "fit preprocessing and train the autoencoder");
  auto* score = app.add_subcommand("score", "write per-tile score maps");
  auto* eval = app.add_subcommand("eval", "bootstrap metrics and method comparison");
  auto* report = app.add_subcommand("report", "print the comparison table");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) rev.pop_back();  // program name
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (seed) cfg.seed = seed;
    if (threads) cfg.threads = *threads;
    if (deterministic) cfg.deterministic = true;
    if (!out_dir.empty()) cfg.paths.out = out_dir;
    if (cfg.deterministic) require(cfg.seed.has_value(), Errc::usage, "--deterministic requires a seed");

    if (synth->parsed()) return cmd_synth(cfg, out);
    if (train->parsed()) return cmd_train(cfg, out);
    if (score->parsed()) return cmd_score(cfg, out);
    if (eval->parsed()) return cmd_eval(cfg, out);
    if (report->parsed()) return cmd_report(cfg, out);
    return kExitUsage;
  } catch (const Error& e) {
    err << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

}  // namespace lrc::cli
