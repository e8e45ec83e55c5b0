// Copyright 2026 The vtalign Authors
// SPDX-License-Identifier: Apache-2.0

#include "vtalign_cli/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"
#include "vtalign/dataio.hpp"
#include "vtalign/embedder.hpp"
#include "vtalign/miner.hpp"
#include "vtalign/parallel.hpp"
#include "vtalign/synth.hpp"
#include "vtalign/trainer.hpp"
#include "vtalign/zsar_eval.hpp"

namespace vtalign::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Flag storage for every subcommand. Defaults come from the core configs.
struct Options {
  std::size_t threads = 1;

  struct {
    std::string manifest;
    bool validate_only = false;
    std::string out;
  } ingest;

  struct {
    std::string manifest;
    MinerConfig cfg;
    std::string out;
    std::string report;
  } mine;

  struct {
    std::string manifest;
    std::string triplets;
    ModelConfig model;
    TrainConfig cfg;
    std::string resume;
    std::string out_ckpt;
    std::string trace;
    bool no_wall_time = false;
  } train;

  struct {
    std::string manifest;
    std::string ckpt;
    std::string classes = "all";
    std::size_t runs = 50;
    FusionWeights fusion;
    std::uint64_t seed = 0;
    std::string out;
    bool strict = false;
  } eval;

  struct {
    std::string manifest;
    std::string ckpt;
    std::vector<std::string> classes;
    FusionWeights fusion;
    std::string out;
    bool strict = false;
  } project;

  struct {
    SynthConfig cfg;
    std::optional<double> sigma;
    bool signed_centers = false;
    bool no_object_sentences = false;
    std::string out_dir;
  } synth;
};

json parsed(const std::string& text) { return json::parse(text); }

// Threads are left out of the echo: outputs must not depend on them.
void log_config(const std::string& command, const json& cfg, std::size_t threads) {
  std::cerr << "[" << command << "] config " << cfg.dump() << '\n';
  std::cerr << "[" << command << "] threads " << threads << '\n';
}

std::string checked_path(const std::string& p, const char* what) {
  if (p.empty()) throw ValidationError(std::string("missing ") + what + " path");
  if (!fs::exists(p)) throw ValidationError(std::string(what) + " not found: " + p);
  return p;
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

ModelParams<float> load_model(const std::string& ckpt_path, ModelConfig* cfg_out) {
  const Checkpoint ck = load_checkpoint(checked_path(ckpt_path, "checkpoint"));
  const ModelConfig cfg = ModelConfig::from_json(ck.config_echo.empty() ? "{}" : ck.config_echo);
  if (cfg_out) *cfg_out = cfg;
  return from_checkpoint(ck, cfg);
}

// "all", an integer k, or a percentage such as "50%".
std::size_t resolve_class_count(const std::string& spec, std::size_t available) {
  if (spec == "all") return available;
  std::string digits = spec;
  const bool percent = !digits.empty() && digits.back() == '%';
  if (percent) digits.pop_back();
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (ec != std::errc() || ptr != digits.data() + digits.size() || !(value > 0.0)) {
    throw ValidationError("--classes must be 'all', a positive integer or a percentage, got '" + spec + "'");
  }
  if (percent) {
    if (value > 100.0) throw ValidationError("--classes percentage above 100");
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(value / 100.0 * available)));
  }
  if (value != std::floor(value)) throw ValidationError("--classes must be an integer, got '" + spec + "'");
  return static_cast<std::size_t>(value);
}

// --- ingest ------------------------------------------------------------------

int cmd_ingest(const Options& o) {
  const json cfg{{"command", "ingest"},
                 {"paths", {{"manifest", o.ingest.manifest}, {"out", o.ingest.out}}},
                 {"validate_only", o.ingest.validate_only}};
  log_config("ingest", cfg, o.threads);
  const DatasetManifest m = load_manifest(checked_path(o.ingest.manifest, "manifest"));
  std::size_t rows = 0;
  for (const auto& v : m.videos) rows += v.rows;
  if (!o.ingest.validate_only) {
    // Full read: every value must be finite.
    m.load_sentence_table();
    parallel_for(m.videos.size(), o.threads, [&](std::size_t i) { m.load_features(i); });
    if (!o.ingest.out.empty()) {
      ensure_parent(o.ingest.out);
      save_manifest(o.ingest.out, m);
    }
  }
  std::set<std::string> labelled;
  for (const auto& v : m.videos) {
    if (v.class_name) labelled.insert(*v.class_name);
  }
  const json summary{{"videos", m.videos.size()},
                     {"segments", m.segment_count()},
                     {"feature_rows", rows},
                     {"classes", m.class_prototypes.size()},
                     {"classes_with_videos", labelled.size()},
                     {"sentences", m.sentence_count},
                     {"d_c", m.feature_dim},
                     {"d_s", m.sentence_dim}};
  std::cerr << "[ingest] ok " << summary.dump() << '\n';
  return kExitOk;
}

// --- mine --------------------------------------------------------------------

int cmd_mine(const Options& o) {
  MinerConfig mc = o.mine.cfg;
  mc.threads = o.threads;
  mc.validate();
  if (o.mine.out.empty()) throw ValidationError("mine: --out is required");
  const std::string report_path = o.mine.report.empty() ? o.mine.out + ".report.json" : o.mine.report;
  const json cfg{{"command", "mine"},
                 {"paths", {{"manifest", o.mine.manifest}, {"out", o.mine.out}, {"report", report_path}}},
                 {"seed", mc.seed},
                 {"miner", parsed(mc.to_json())}};
  log_config("mine", cfg, o.threads);

  const DatasetManifest m = load_manifest(checked_path(o.mine.manifest, "manifest"));
  const Matrix sentences = m.load_sentence_table();
  MiningResult r = build_triplets(m, sentences, mc);
  r.report.config_echo = cfg.dump();
  ensure_parent(o.mine.out);
  write_triplets_csv(o.mine.out, r.triplets, cfg.dump());
  ensure_parent(report_path);
  std::ofstream rep(report_path, std::ios::trunc | std::ios::binary);
  if (!rep) throw ValidationError("cannot open for writing: " + report_path);
  rep << r.report.to_json() << '\n';
  std::cerr << "[mine] " << r.triplets.size() << " triplets from " << r.report.windows << " windows ("
            << r.report.unmined_anchors << " windows without negatives)\n";
  return kExitOk;
}

// --- train -------------------------------------------------------------------

int cmd_train(const Options& o) {
  const DatasetManifest m = load_manifest(checked_path(o.train.manifest, "manifest"));
  ModelConfig model = o.train.model;
  model.d_c = m.feature_dim;
  model.d_s = m.sentence_dim;
  model.validate();
  TrainConfig tc = o.train.cfg;
  tc.threads = o.threads;
  tc.record_wall_time = !o.train.no_wall_time;
  tc.validate();
  if (o.train.out_ckpt.empty()) throw ValidationError("train: --out-ckpt is required");
  const std::string trace_path = o.train.trace.empty() ? o.train.out_ckpt + ".trace.csv" : o.train.trace;
  json tcj = parsed(tc.to_json());
  tcj["record_wall_time"] = tc.record_wall_time;
  const json cfg{{"command", "train"},
                 {"paths",
                  {{"manifest", o.train.manifest},
                   {"triplets", o.train.triplets},
                   {"resume", o.train.resume},
                   {"out_ckpt", o.train.out_ckpt},
                   {"trace", trace_path}}},
                 {"seed", tc.seed},
                 {"model", parsed(model.to_json())},
                 {"train", tcj}};
  log_config("train", cfg, o.threads);

  std::optional<ModelParams<float>> init;
  if (!o.train.resume.empty()) {
    const Checkpoint ck = load_checkpoint(checked_path(o.train.resume, "checkpoint"), expected_shapes(model));
    init = from_checkpoint(ck, model);
    std::cerr << "[train] resuming from " << o.train.resume << " (optimizer state restarts)\n";
  }
  const auto triplets = read_triplets_csv(checked_path(o.train.triplets, "triplets"));
  const Matrix sentences = m.load_sentence_table();
  const TrainResult r = train(m, sentences, triplets, model, tc, std::move(init));
  ensure_parent(o.train.out_ckpt);
  save_checkpoint(o.train.out_ckpt, to_checkpoint(r.params, cfg.dump()));
  ensure_parent(trace_path);
  r.trace.write_csv(trace_path, cfg.dump());
  std::cerr << "[train] kept epoch " << r.trace.best_epoch << " of " << r.trace.epochs.size() << " ("
            << r.train_triplets << " train / " << r.val_triplets << " validation triplets)\n";
  return kExitOk;
}

// --- eval --------------------------------------------------------------------

int cmd_eval(const Options& o) {
  o.eval.fusion.validate();
  if (o.eval.out.empty()) throw ValidationError("eval: --out is required");
  const DatasetManifest m = load_manifest(checked_path(o.eval.manifest, "manifest"));
  ModelConfig model;
  const ModelParams<float> params = load_model(o.eval.ckpt, &model);
  if (model.d_c != m.feature_dim || model.d_s != m.sentence_dim) {
    throw ValidationError("eval: checkpoint dimensions do not match the manifest");
  }
  std::vector<std::string> names;
  for (const auto& c : m.class_prototypes) names.push_back(c.class_name);
  if (names.empty()) throw ValidationError("eval: manifest has no class prototypes");
  const std::size_t k = resolve_class_count(o.eval.classes, names.size());
  const SplitSpec split = make_splits(names, k, o.eval.runs, o.eval.seed);

  const json cfg{{"command", "eval"},
                 {"paths", {{"manifest", o.eval.manifest}, {"ckpt", o.eval.ckpt}, {"out", o.eval.out}}},
                 {"seed", o.eval.seed},
                 {"model", parsed(model.to_json())},
                 {"fusion", {{"alpha", o.eval.fusion.alpha}, {"beta", o.eval.fusion.beta}}},
                 {"split", {{"classes", o.eval.classes}, {"k", split.k}, {"runs", split.runs}}},
                 {"strict", o.eval.strict}};
  log_config("eval", cfg, o.threads);

  const Matrix sentences = m.load_sentence_table();
  const auto prototypes = build_prototypes(m, sentences, params);
  EvalReport rep = evaluate(m, sentences, prototypes, split, o.eval.fusion, params, model,
                            EvalOptions{o.eval.strict, o.threads});
  rep.config_echo = cfg.dump();
  for (const auto& w : rep.warnings) std::cerr << "[eval] warning: " << w << '\n';
  const fs::path out(o.eval.out);
  fs::create_directories(out);
  {
    std::ofstream f(out / "report.json", std::ios::trunc | std::ios::binary);
    if (!f) throw ValidationError("cannot open for writing: " + (out / "report.json").string());
    f << rep.to_json() << '\n';
  }
  rep.write_confusion_csv(out / "confusion.csv");
  rep.write_per_class_csv(out / "per_class.csv");
  std::cerr << "[eval] " << rep.run_accuracy.size() << " run(s), mean accuracy " << rep.mean << " +- " << rep.stddev
            << '\n';
  return kExitOk;
}

// --- project -----------------------------------------------------------------

int cmd_project(const Options& o) {
  if (o.project.classes.empty()) throw ValidationError("project: --classes must name at least one class");
  if (o.project.out.empty()) throw ValidationError("project: --out is required");
  o.project.fusion.validate();
  const DatasetManifest m = load_manifest(checked_path(o.project.manifest, "manifest"));
  ModelConfig model;
  const ModelParams<float> params = load_model(o.project.ckpt, &model);
  if (model.d_c != m.feature_dim || model.d_s != m.sentence_dim) {
    throw ValidationError("project: checkpoint dimensions do not match the manifest");
  }
  const std::set<std::string> wanted(o.project.classes.begin(), o.project.classes.end());
  std::set<std::string> known;
  for (const auto& c : m.class_prototypes) known.insert(c.class_name);
  for (const auto& c : wanted) {
    if (!known.count(c)) throw ValidationError("project: unknown class \"" + c + "\"");
  }
  const json cfg{{"command", "project"},
                 {"paths", {{"manifest", o.project.manifest}, {"ckpt", o.project.ckpt}, {"out", o.project.out}}},
                 {"model", parsed(model.to_json())},
                 {"fusion", {{"alpha", o.project.fusion.alpha}, {"beta", o.project.fusion.beta}}},
                 {"classes", std::vector<std::string>(wanted.begin(), wanted.end())},
                 {"strict", o.project.strict}};
  log_config("project", cfg, o.threads);

  const Matrix sentences = m.load_sentence_table();
  std::vector<std::size_t> picked;
  for (std::size_t i = 0; i < m.videos.size(); ++i) {
    if (m.videos[i].class_name && wanted.count(*m.videos[i].class_name)) picked.push_back(i);
  }
  std::vector<Matrix> emb(picked.size());
  parallel_for(picked.size(), o.threads, [&](std::size_t j) {
    const VideoEntry& v = m.videos[picked[j]];
    emb[j] = vid_embedding(m.load_features(picked[j]), object_sentence_vector(v, sentences), o.project.fusion, params,
                           model, o.project.strict);
  });
  std::vector<std::string> ids, labels;
  for (std::size_t i : picked) {
    ids.push_back(m.videos[i].video_id);
    labels.push_back(*m.videos[i].class_name);
  }
  for (const auto& proto : build_prototypes(m, sentences, params)) {
    if (!wanted.count(proto.class_name)) continue;
    emb.push_back(proto.embedding);
    ids.push_back("proto:" + proto.class_name);
    labels.push_back(proto.class_name);
  }
  Mat<double> rows(static_cast<Eigen::Index>(emb.size()), params.w_v.cols());
  for (std::size_t i = 0; i < emb.size(); ++i) rows.row(static_cast<Eigen::Index>(i)) = emb[i].cast<double>();
  const Projection proj = pca_project(rows);
  ensure_parent(o.project.out);
  write_projection_csv(o.project.out, ids, labels, proj, cfg.dump());
  std::cerr << "[project] " << picked.size() << " videos and " << wanted.size() << " prototypes written\n";
  return kExitOk;
}

// --- synth -------------------------------------------------------------------

int cmd_synth(const Options& o) {
  SynthConfig sc = o.synth.cfg;
  if (o.synth.sigma) sc.sigma_v = sc.sigma_s = *o.synth.sigma;
  sc.half_normal_centers = !o.synth.signed_centers;
  sc.object_sentences = !o.synth.no_object_sentences;
  sc.validate();
  if (o.synth.out_dir.empty()) throw ValidationError("synth: --out-dir is required");
  const json cfg{{"command", "synth"}, {"paths", {{"out_dir", o.synth.out_dir}}}, {"seed", sc.seed},
                 {"synth", parsed(sc.to_json())}};
  log_config("synth", cfg, o.threads);
  const SynthOutput out = synth_generate(sc, o.synth.out_dir);
  std::cerr << "[synth] wrote " << out.all_manifest.string() << ", " << out.train_manifest.string() << ", "
            << out.eval_manifest.string() << '\n';
  return kExitOk;
}

// --- flag wiring -------------------------------------------------------------

void add_model_flags(CLI::App* sub, ModelConfig& m) {
  sub->add_option("--d-model", m.d_model, "encoder width")->capture_default_str();
  sub->add_option("--heads", m.heads, "attention heads")->capture_default_str();
  sub->add_option("--layers", m.layers, "encoder layers")->capture_default_str();
  sub->add_option("--d-ff", m.d_ff, "feed-forward width (0 = 4 * d_model)")->capture_default_str();
  sub->add_option("--d-emb", m.d_emb, "joint embedding size")->capture_default_str();
  sub->add_option("--dropout", m.dropout, "encoder dropout rate")->capture_default_str();
  sub->add_option("--max-rows", m.max_rows, "longest feature stack fed to the encoder")->capture_default_str();
  sub->add_option("--ln-eps", m.ln_eps, "layer norm epsilon")->capture_default_str();
}

void add_fusion_flags(CLI::App* sub, FusionWeights& f) {
  sub->add_option("--alpha", f.alpha, "weight of the visual embedding")->capture_default_str();
  sub->add_option("--beta", f.beta, "weight of the object-sentence embedding")->capture_default_str();
}

}  // namespace

int run(const std::vector<std::string>& args) {
  Options o;
  o.train.model.d_c = 0;
  o.train.model.d_s = 0;

  CLI::App app{"vtalign: visual-text alignment for zero-shot action recognition"};
  app.require_subcommand(1);
  app.fallthrough();  // global --threads may follow the subcommand
  app.set_version_flag("--version", "vtalign 0.1.0");
  app.add_option("--threads", o.threads, "worker threads (0 = all cores); outputs do not depend on it")
      ->capture_default_str();

  auto* ingest = app.add_subcommand("ingest", "load and cross-validate a dataset manifest");
  ingest->add_option("manifest", o.ingest.manifest, "manifest JSON")->required();
  ingest->add_flag("--validate-only", o.ingest.validate_only, "check structure and fvec headers only");
  ingest->add_option("--out", o.ingest.out, "write the normalized manifest here");

  auto* mine = app.add_subcommand("mine", "mine hard-negative triplets");
  mine->add_option("manifest", o.mine.manifest, "manifest JSON")->required();
  mine->add_option("--tau", o.mine.cfg.tau, "similarity threshold; negatives have cos <= 1 - tau")
      ->capture_default_str();
  mine->add_option("--n", o.mine.cfg.n_negatives, "negatives per anchor")->capture_default_str();
  mine->add_option("--windows", o.mine.cfg.n_aug_segments, "augmented windows per segment")->capture_default_str();
  mine->add_option("--max-window", o.mine.cfg.max_window_s, "longest window in seconds")->capture_default_str();
  mine->add_option("--seed", o.mine.cfg.seed, "random seed")->capture_default_str();
  mine->add_flag("--no-object-filter", [&](std::int64_t) { o.mine.cfg.object_filter = false; },
                 "ignore object sentences when filtering negatives");
  mine->add_option("--out", o.mine.out, "triplet CSV")->required();
  mine->add_option("--report", o.mine.report, "mining report JSON (default <out>.report.json)");

  auto* tr = app.add_subcommand("train", "train the visual and sentence encoders");
  tr->add_option("manifest", o.train.manifest, "manifest JSON")->required();
  tr->add_option("--triplets", o.train.triplets, "triplet CSV from `mine`")->required();
  add_model_flags(tr, o.train.model);
  tr->add_option("--lr", o.train.cfg.lr, "learning rate")->capture_default_str();
  tr->add_option("--beta1", o.train.cfg.beta1, "Adam beta1")->capture_default_str();
  tr->add_option("--beta2", o.train.cfg.beta2, "Adam beta2")->capture_default_str();
  tr->add_option("--adam-eps", o.train.cfg.adam_eps, "Adam epsilon")->capture_default_str();
  tr->add_option("--wd", o.train.cfg.weight_decay, "decoupled weight decay")->capture_default_str();
  tr->add_option("--batch", o.train.cfg.batch_size, "minibatch size")->capture_default_str();
  tr->add_option("--epochs", o.train.cfg.epochs, "maximum epochs")->capture_default_str();
  tr->add_option("--patience", o.train.cfg.early_stop_patience, "early-stop patience in epochs")
      ->capture_default_str();
  tr->add_option("--margin", o.train.cfg.margin, "triplet margin")->capture_default_str();
  tr->add_option("--val-fraction", o.train.cfg.val_fraction, "fraction of videos held out for validation")
      ->capture_default_str();
  tr->add_option("--seed", o.train.cfg.seed, "random seed")->capture_default_str();
  tr->add_option("--resume", o.train.resume, "start from this checkpoint");
  tr->add_option("--out-ckpt", o.train.out_ckpt, "output checkpoint")->required();
  tr->add_option("--trace", o.train.trace, "loss trace CSV (default <out-ckpt>.trace.csv)");
  tr->add_flag("--no-wall-time", o.train.no_wall_time, "write 0 in the trace's seconds column");

  auto* ev = app.add_subcommand("eval", "zero-shot evaluation over random class splits");
  ev->add_option("manifest", o.eval.manifest, "manifest JSON with test videos and class prototypes")->required();
  ev->add_option("--ckpt", o.eval.ckpt, "trained checkpoint")->required();
  ev->add_option("--classes", o.eval.classes, "classes per run: all, k, or a percentage like 50%")
      ->capture_default_str();
  ev->add_option("--runs", o.eval.runs, "number of random splits")->capture_default_str();
  add_fusion_flags(ev, o.eval.fusion);
  ev->add_option("--seed", o.eval.seed, "split seed")->capture_default_str();
  ev->add_option("--out", o.eval.out, "output directory")->required();
  ev->add_flag("--strict", o.eval.strict, "fail when beta > 0 and a video has no object sentences");

  auto* pr = app.add_subcommand("project", "2-D PCA projection of video and prototype embeddings");
  pr->add_option("manifest", o.project.manifest, "manifest JSON")->required();
  pr->add_option("--ckpt", o.project.ckpt, "trained checkpoint")->required();
  pr->add_option("--classes", o.project.classes, "comma-separated class names")->delimiter(',');
  add_fusion_flags(pr, o.project.fusion);
  pr->add_option("--out", o.project.out, "coordinates CSV")->required();
  pr->add_flag("--strict", o.project.strict, "fail when beta > 0 and a video has no object sentences");

  auto* sy = app.add_subcommand("synth", "generate a synthetic dataset with separable classes");
  sy->add_option("--classes", o.synth.cfg.classes, "number of classes G")->capture_default_str();
  sy->add_option("--per-class", o.synth.cfg.per_class, "videos per class")->capture_default_str();
  sy->add_option("--eval-classes", o.synth.cfg.eval_classes, "classes held out for zero-shot evaluation")
      ->capture_default_str();
  sy->add_option("--d-c", o.synth.cfg.d_c, "visual feature size")->capture_default_str();
  sy->add_option("--d-s", o.synth.cfg.d_s, "sentence vector size")->capture_default_str();
  sy->add_option("--sigma", o.synth.sigma, "set both noise levels");
  sy->add_option("--sigma-v", o.synth.cfg.sigma_v, "visual noise")->capture_default_str();
  sy->add_option("--sigma-s", o.synth.cfg.sigma_s, "sentence noise")->capture_default_str();
  sy->add_option("--t-min", o.synth.cfg.t_min, "shortest video in rows")->capture_default_str();
  sy->add_option("--t-max", o.synth.cfg.t_max, "longest video in rows")->capture_default_str();
  sy->add_flag("--signed-centers", o.synth.signed_centers, "draw signed Gaussian centers");
  sy->add_flag("--no-object-sentences", o.synth.no_object_sentences, "omit object sentences");
  sy->add_option("--seed", o.synth.cfg.seed, "random seed")->capture_default_str();
  sy->add_option("--out-dir", o.synth.out_dir, "output directory")->required();

  try {
    std::vector<std::string> rest(args.begin() + (args.empty() ? 0 : 1), args.end());
    std::reverse(rest.begin(), rest.end());  // CLI11 consumes from the back
    app.parse(rest);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  o.threads = resolve_threads(o.threads);
  // The default patience exceeds short runs such as --epochs 1; only an
  // explicit --patience is held to patience <= epochs.
  if (tr->count("--patience") == 0) {
    o.train.cfg.early_stop_patience = std::min(o.train.cfg.early_stop_patience, o.train.cfg.epochs);
  }
  try {
    if (*ingest) return cmd_ingest(o);
    if (*mine) return cmd_mine(o);
    if (*tr) return cmd_train(o);
    if (*ev) return cmd_eval(o);
    if (*pr) return cmd_project(o);
    if (*sy) return cmd_synth(o);
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace vtalign::cli
