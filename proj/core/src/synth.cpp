// Copyright 2026 The vtalign Authors
// SPDX-License-Identifier: Apache-2.0

#include "vtalign/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "json.hpp"
#include "vtalign/rng.hpp"

namespace vtalign {

namespace fs = std::filesystem;
using json = nlohmann::json;

void SynthConfig::validate() const {
  auto fail = [](const std::string& m) { throw ValidationError("synth config: " + m); };
  if (classes < 2) fail("need at least 2 classes");
  if (per_class == 0) fail("per_class must be >= 1");
  if (eval_classes == 0 || eval_classes >= classes) fail("eval_classes must be in [1, classes)");
  if (d_c == 0 || d_s == 0) fail("dimensions must be positive");
  if (!(sigma_v >= 0.0) || !(sigma_s >= 0.0) || !std::isfinite(sigma_v) || !std::isfinite(sigma_s)) {
    fail("noise levels must be finite and >= 0");
  }
  if (t_min == 0 || t_max < t_min) fail("need 1 <= t_min <= t_max");
}

std::string SynthConfig::to_json() const {
  return json{{"classes", classes},
              {"per_class", per_class},
              {"eval_classes", eval_classes},
              {"d_c", d_c},
              {"d_s", d_s},
              {"sigma_v", sigma_v},
              {"sigma_s", sigma_s},
              {"t_min", t_min},
              {"t_max", t_max},
              {"half_normal_centers", half_normal_centers},
              {"object_sentences", object_sentences},
              {"seed", seed}}
      .dump();
}

namespace {

std::string class_label(std::size_t g) {
  std::string s = std::to_string(g);
  if (s.size() < 2) s.insert(0, 2 - s.size(), '0');
  return "class_" + s;
}

}  // namespace

SynthOutput synth_generate(const SynthConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  const auto d_s = static_cast<Eigen::Index>(cfg.d_s);
  const auto d_c = static_cast<Eigen::Index>(cfg.d_c);
  const std::size_t G = cfg.classes;

  Rng center_rng(derive_seed(cfg.seed, hash_string("centers")));
  Matrix centers(static_cast<Eigen::Index>(G), d_s);
  for (Eigen::Index g = 0; g < centers.rows(); ++g) {
    double norm2 = 0.0;
    do {
      norm2 = 0.0;
      for (Eigen::Index j = 0; j < d_s; ++j) {
        double x = center_rng.normal();
        if (cfg.half_normal_centers) x = std::abs(x);
        centers(g, j) = static_cast<float>(x);
        norm2 += x * x;
      }
    } while (norm2 == 0.0);
    centers.row(g) /= static_cast<float>(std::sqrt(norm2));
  }

  // Entries N(0, 1/d_s) keep lifted rows near unit scale per coordinate.
  Rng lift_rng(derive_seed(cfg.seed, hash_string("lift")));
  Matrix lift(d_c, d_s);
  const double lift_sd = 1.0 / std::sqrt(static_cast<double>(cfg.d_s));
  for (Eigen::Index i = 0; i < lift.size(); ++i) lift.data()[i] = static_cast<float>(lift_rng.normal(0.0, lift_sd));

  std::vector<std::size_t> all(G);
  for (std::size_t g = 0; g < G; ++g) all[g] = g;
  Rng split_rng(derive_seed(cfg.seed, hash_string("partition")));
  const auto held = sample_without_replacement(all, cfg.eval_classes, split_rng);
  const std::set<std::size_t> held_set(held.begin(), held.end());

  const std::size_t n_videos = G * cfg.per_class;
  Matrix sentences(static_cast<Eigen::Index>(G + n_videos), d_s);
  for (std::size_t g = 0; g < G; ++g) sentences.row(static_cast<Eigen::Index>(g)) = centers.row(static_cast<Eigen::Index>(g)).cwiseAbs();

  fs::create_directories(out_dir / "features");
  DatasetManifest all_m, train_m, eval_m;
  all_m.sentence_table_path = out_dir / "sentences.fvec";
  SynthOutput out;
  for (std::size_t g = 0; g < G; ++g) {
    const ClassPrototypeRef ref{class_label(g), static_cast<std::uint32_t>(g)};
    all_m.class_prototypes.push_back(ref);
    if (held_set.count(g)) {
      eval_m.class_prototypes.push_back(ref);
      out.eval_classes.push_back(ref.class_name);
    } else {
      train_m.class_prototypes.push_back(ref);
      out.train_classes.push_back(ref.class_name);
    }
  }

  for (std::size_t g = 0; g < G; ++g) {
    const Matrix visual_center = centers.row(static_cast<Eigen::Index>(g)) * lift.transpose();
    for (std::size_t k = 0; k < cfg.per_class; ++k) {
      const std::size_t vid = g * cfg.per_class + k;
      Rng rng(derive_seed(cfg.seed, hash_string("video"), vid));
      const std::string id = class_label(g) + "_v" + std::to_string(k);
      const auto sid = static_cast<Eigen::Index>(G + vid);
      for (Eigen::Index j = 0; j < d_s; ++j) {
        sentences(sid, j) = static_cast<float>(std::abs(centers(static_cast<Eigen::Index>(g), j) + rng.normal(0.0, cfg.sigma_s)));
      }
      const std::size_t t = cfg.t_min + rng.uniform_index(cfg.t_max - cfg.t_min + 1);
      Matrix stack(static_cast<Eigen::Index>(t), d_c);
      for (Eigen::Index r = 0; r < stack.rows(); ++r) {
        for (Eigen::Index j = 0; j < d_c; ++j) {
          stack(r, j) = static_cast<float>(visual_center(0, j) + rng.normal(0.0, cfg.sigma_v));
        }
      }
      const fs::path fpath = out_dir / "features" / (id + ".fvec");
      write_fvec(fpath, stack);

      VideoEntry v;
      v.video_id = id;
      v.fvec_path = fpath;
      v.class_name = class_label(g);
      v.rows = static_cast<std::uint32_t>(t);
      v.cols = static_cast<std::uint32_t>(cfg.d_c);
      SegmentAnnotation seg;
      seg.start_s = 0.0;
      seg.end_s = static_cast<double>(t);
      seg.sentence_id = static_cast<std::uint32_t>(sid);
      if (cfg.object_sentences) seg.object_sentence_ids = {static_cast<std::uint32_t>(g)};
      v.segments.push_back(seg);
      all_m.videos.push_back(v);
      (held_set.count(g) ? eval_m : train_m).videos.push_back(std::move(v));
    }
  }
  write_fvec(all_m.sentence_table_path, sentences);
  train_m.sentence_table_path = eval_m.sentence_table_path = all_m.sentence_table_path;

  out.all_manifest = out_dir / "all.json";
  out.train_manifest = out_dir / "train.json";
  out.eval_manifest = out_dir / "eval.json";
  save_manifest(out.all_manifest, all_m);
  save_manifest(out.train_manifest, train_m);
  save_manifest(out.eval_manifest, eval_m);

  std::ofstream echo(out_dir / "synth_config.json", std::ios::trunc);
  if (!echo) throw ValidationError("cannot open for writing: " + (out_dir / "synth_config.json").string());
  json j = json::parse(cfg.to_json());
  j["train_classes"] = out.train_classes;
  j["eval_classes_names"] = out.eval_classes;
  echo << j.dump(2) << '\n';
  return out;
}

}  // namespace vtalign
