// Copyright 2026 The vtalign Authors
// SPDX-License-Identifier: Apache-2.0

#include "vtalign/zsar_eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "json.hpp"
#include "vtalign/netmath.hpp"
#include "vtalign/parallel.hpp"
#include "vtalign/rng.hpp"
#include "vtalign/textio.hpp"

namespace vtalign {

using json = nlohmann::json;

void FusionWeights::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw ValidationError("fusion weights must be non-negative");
  if (alpha == 0.0 && beta == 0.0) throw ValidationError("fusion weights alpha and beta cannot both be 0");
}

std::vector<ClassPrototype> build_prototypes(const DatasetManifest& manifest, const Matrix& sentence_table,
                                             const ModelParams<float>& p) {
  std::vector<ClassPrototype> out;
  out.reserve(manifest.class_prototypes.size());
  for (const auto& c : manifest.class_prototypes) {
    const Matrix s = sentence_table.row(c.prototype_sentence_id);
    out.push_back({c.class_name, sem_forward(s, p)});
  }
  return out;
}

std::optional<Matrix> object_sentence_vector(const VideoEntry& video, const Matrix& sentence_table) {
  Matrix sum = Matrix::Zero(1, sentence_table.cols());
  std::size_t n = 0;
  for (const auto& seg : video.segments) {
    for (auto id : seg.object_sentence_ids) {
      sum += sentence_table.row(id);
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return Matrix(sum / static_cast<float>(n));
}

Matrix vid_embedding(const Matrix& features, const std::optional<Matrix>& object_sentence, const FusionWeights& w,
                     const ModelParams<float>& p, const ModelConfig& cfg, bool strict, bool* fell_back) {
  w.validate();
  if (fell_back) *fell_back = false;
  Matrix out = Matrix::Zero(1, p.w_v.cols());
  if (w.alpha > 0.0) {
    const Matrix stack = select_rows(features, 0, static_cast<std::size_t>(features.rows()), cfg.max_rows);
    out += static_cast<float>(w.alpha) * vem_forward(stack, p, cfg);
  }
  if (w.beta > 0.0) {
    if (object_sentence) {
      out += static_cast<float>(w.beta) * sem_forward(*object_sentence, p);
    } else if (strict) {
      throw ValidationError("vid_embedding: beta > 0 but the video has no object sentences");
    } else {
      if (fell_back) *fell_back = true;
      if (w.alpha == 0.0) {
        const Matrix stack = select_rows(features, 0, static_cast<std::size_t>(features.rows()), cfg.max_rows);
        out = vem_forward(stack, p, cfg);
      }
    }
  }
  return out;
}

std::optional<std::string> classify(const Matrix& video_embedding, std::span<const ClassPrototype> prototypes) {
  if (prototypes.empty()) throw ValidationError("classify: no prototypes");
  if (video_embedding.squaredNorm() == 0.0f) return std::nullopt;
  const std::span<const float> v = row_span(video_embedding);
  const ClassPrototype* best = nullptr;
  double best_sim = -2.0;
  for (const auto& proto : prototypes) {
    const double sim = proto.embedding.squaredNorm() == 0.0f ? 0.0 : cosine_sim(row_span(proto.embedding), v);
    if (!best || sim > best_sim || (sim == best_sim && proto.class_name < best->class_name)) {
      best = &proto;
      best_sim = sim;
    }
  }
  return best->class_name;
}

SplitSpec make_splits(std::vector<std::string> class_names, std::size_t k, std::size_t runs, std::uint64_t seed) {
  std::sort(class_names.begin(), class_names.end());
  if (std::adjacent_find(class_names.begin(), class_names.end()) != class_names.end()) {
    throw ValidationError("make_splits: duplicate class names");
  }
  if (k == 0) throw ValidationError("make_splits: k must be >= 1");
  if (k > class_names.size()) {
    throw ValidationError("make_splits: k=" + std::to_string(k) + " exceeds " + std::to_string(class_names.size()) +
                          " classes");
  }
  if (runs == 0) throw ValidationError("make_splits: runs must be >= 1");
  SplitSpec spec;
  spec.k = k;
  spec.seed = seed;
  spec.runs = k == class_names.size() ? 1 : runs;
  for (std::size_t r = 0; r < spec.runs; ++r) {
    Rng rng(derive_seed(seed, hash_string("split"), r));
    auto subset = sample_without_replacement(class_names, k, rng);
    std::sort(subset.begin(), subset.end());
    spec.subsets.push_back(std::move(subset));
  }
  return spec;
}

EvalReport evaluate_predictions(std::span<const std::string> truth, const SplitSpec& split, const Predictor& predict) {
  EvalReport rep;
  std::set<std::string> axis;
  for (const auto& s : split.subsets) axis.insert(s.begin(), s.end());
  rep.classes.assign(axis.begin(), axis.end());
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < rep.classes.size(); ++i) index[rep.classes[i]] = i;
  const std::size_t nc = rep.classes.size();
  rep.confusion.assign(nc, std::vector<std::size_t>(nc, 0));
  rep.abstentions.assign(nc, 0);
  rep.class_correct.assign(nc, 0);
  rep.class_total.assign(nc, 0);

  std::map<std::string, std::vector<std::size_t>> videos_of;
  for (std::size_t i = 0; i < truth.size(); ++i) videos_of[truth[i]].push_back(i);

  for (std::size_t r = 0; r < split.subsets.size(); ++r) {
    std::vector<std::string> candidates;
    for (const auto& c : split.subsets[r]) {
      if (videos_of.count(c)) {
        candidates.push_back(c);
      } else {
        rep.warnings.push_back("run " + std::to_string(r) + ": class \"" + c + "\" has no test videos; excluded");
      }
    }
    std::size_t correct = 0, total = 0;
    for (const auto& c : candidates) {
      const std::size_t ti = index.at(c);
      for (std::size_t vi : videos_of.at(c)) {
        const std::optional<std::string> pred = predict(vi, candidates);
        ++total;
        ++rep.class_total[ti];
        if (!pred) {
          ++rep.abstentions[ti];
          continue;
        }
        auto pi = index.find(*pred);
        if (pi == index.end()) throw ValidationError("evaluate: predictor returned unknown class " + *pred);
        ++rep.confusion[ti][pi->second];
        if (*pred == c) {
          ++correct;
          ++rep.class_correct[ti];
        }
      }
    }
    if (total == 0) {
      rep.warnings.push_back("run " + std::to_string(r) + ": no test videos; run skipped");
      continue;
    }
    rep.pooled_correct += correct;
    rep.pooled_total += total;
    rep.run_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(total));
  }
  if (!rep.run_accuracy.empty()) {
    double sum = 0.0;
    for (double a : rep.run_accuracy) sum += a;
    rep.mean = sum / static_cast<double>(rep.run_accuracy.size());
    double var = 0.0;
    for (double a : rep.run_accuracy) var += (a - rep.mean) * (a - rep.mean);
    rep.stddev = std::sqrt(var / static_cast<double>(rep.run_accuracy.size()));
  }
  return rep;
}

EvalReport evaluate(const DatasetManifest& manifest, const Matrix& sentence_table,
                    std::span<const ClassPrototype> prototypes, const SplitSpec& split, const FusionWeights& w,
                    const ModelParams<float>& p, const ModelConfig& cfg, const EvalOptions& opts) {
  w.validate();
  std::map<std::string, const ClassPrototype*> proto_by_name;
  for (const auto& pr : prototypes) proto_by_name[pr.class_name] = &pr;
  for (const auto& subset : split.subsets) {
    for (const auto& c : subset) {
      if (!proto_by_name.count(c)) throw ValidationError("evaluate: split class \"" + c + "\" has no prototype");
    }
  }

  std::vector<std::size_t> labelled;
  std::vector<std::string> truth;
  for (std::size_t i = 0; i < manifest.videos.size(); ++i) {
    if (manifest.videos[i].class_name) {
      labelled.push_back(i);
      truth.push_back(*manifest.videos[i].class_name);
    }
  }
  std::vector<Matrix> embeddings(labelled.size());
  std::vector<char> fell_back(labelled.size(), 0);
  parallel_for(labelled.size(), opts.threads, [&](std::size_t j) {
    const VideoEntry& video = manifest.videos[labelled[j]];
    bool fb = false;
    embeddings[j] = vid_embedding(manifest.load_features(labelled[j]), object_sentence_vector(video, sentence_table),
                                  w, p, cfg, opts.strict, &fb);
    fell_back[j] = fb ? 1 : 0;
  });

  std::vector<std::string> notes;
  const auto fallbacks = static_cast<std::size_t>(std::count(fell_back.begin(), fell_back.end(), 1));
  if (fallbacks) {
    notes.push_back(std::to_string(fallbacks) + " video(s) without object sentences used the visual embedding only");
  }

  std::size_t abstain_logged = 0;
  EvalReport rep = evaluate_predictions(truth, split, [&](std::size_t i, std::span<const std::string> candidates) {
    std::vector<ClassPrototype> subset;
    subset.reserve(candidates.size());
    for (const auto& c : candidates) subset.push_back(*proto_by_name.at(c));
    auto pred = classify(embeddings[i], subset);
    if (!pred && abstain_logged++ < 5) {
      std::cerr << "[eval] zero-norm embedding for video " << manifest.videos[labelled[i]].video_id
                << "; counted as an error\n";
    }
    return pred;
  });
  rep.warnings.insert(rep.warnings.begin(), notes.begin(), notes.end());
  return rep;
}

std::string EvalReport::to_json() const {
  json j;
  j["runs"] = run_accuracy.size();
  j["run_accuracy"] = run_accuracy;
  j["mean"] = mean;
  j["std"] = stddev;
  j["pooled_accuracy"] = pooled_accuracy();
  j["pooled_correct"] = pooled_correct;
  j["pooled_total"] = pooled_total;
  std::size_t abst = 0;
  for (auto a : abstentions) abst += a;
  j["abstentions"] = abst;
  j["classes"] = classes;
  j["warnings"] = warnings;
  j["config"] = config_echo.empty() ? json(nullptr) : json::parse(config_echo);
  return j.dump(2);
}

void EvalReport::write_confusion_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw ValidationError("cannot open for writing: " + path.string());
  if (!config_echo.empty()) out << "# " << config_echo << '\n';
  bool any_abstain = false;
  for (auto a : abstentions) any_abstain = any_abstain || a > 0;
  out << "truth";
  for (const auto& c : classes) out << ',' << c;
  if (any_abstain) out << ",<abstain>";
  out << '\n';
  for (std::size_t t = 0; t < classes.size(); ++t) {
    out << classes[t];
    for (std::size_t p = 0; p < classes.size(); ++p) out << ',' << confusion[t][p];
    if (any_abstain) out << ',' << abstentions[t];
    out << '\n';
  }
}

void EvalReport::write_per_class_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw ValidationError("cannot open for writing: " + path.string());
  if (!config_echo.empty()) out << "# " << config_echo << '\n';
  out << "class,correct,total,accuracy\n";
  for (std::size_t t = 0; t < classes.size(); ++t) {
    const double acc = class_total[t] ? static_cast<double>(class_correct[t]) / static_cast<double>(class_total[t])
                                      : 0.0;
    out << classes[t] << ',' << class_correct[t] << ',' << class_total[t] << ',' << format_number(acc) << '\n';
  }
}

double raw_sentence_oracle_accuracy(const DatasetManifest& manifest, const Matrix& sentence_table,
                                    std::span<const std::string> classes) {
  std::vector<ClassPrototype> protos;
  for (const auto& c : manifest.class_prototypes) {
    if (std::find(classes.begin(), classes.end(), c.class_name) != classes.end()) {
      protos.push_back({c.class_name, sentence_table.row(c.prototype_sentence_id)});
    }
  }
  if (protos.empty()) throw ValidationError("raw_sentence_oracle_accuracy: no prototypes for the given classes");
  std::size_t correct = 0, total = 0;
  for (const auto& v : manifest.videos) {
    if (!v.class_name || v.segments.empty()) continue;
    if (std::find(classes.begin(), classes.end(), *v.class_name) == classes.end()) continue;
    const Matrix s = sentence_table.row(v.segments.front().sentence_id);
    ++total;
    if (classify(s, protos) == v.class_name) ++correct;
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

Projection pca_project(const Mat<double>& vectors) {
  if (vectors.rows() < 3) throw ValidationError("pca_project: need at least 3 vectors");
  const Eigen::RowVectorXd mean = vectors.colwise().mean();
  const Mat<double> centered = vectors.rowwise() - mean;
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(vectors.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::Index d = cov.rows();
  // Eigenvalues ascend; take the two largest.
  Projection proj;
  proj.coords.assign(static_cast<std::size_t>(vectors.rows()), {0.0, 0.0});
  const double top = d >= 1 ? eig.eigenvalues()(d - 1) : 0.0;
  const double tol = std::max(top, 1e-300) * 1e-10;
  for (int axis = 0; axis < 2; ++axis) {
    const Eigen::Index col = d - 1 - axis;
    if (col < 0 || eig.eigenvalues()(col) <= tol) {
      proj.rank_deficient = true;
      continue;
    }
    Eigen::VectorXd scores = centered * eig.eigenvectors().col(col);
    Eigen::Index arg = 0;
    for (Eigen::Index i = 1; i < scores.size(); ++i) {
      if (std::abs(scores(i)) > std::abs(scores(arg))) arg = i;
    }
    if (scores(arg) < 0.0) scores = -scores;
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
      (axis == 0 ? proj.coords[static_cast<std::size_t>(i)].first : proj.coords[static_cast<std::size_t>(i)].second) =
          scores(i);
    }
  }
  if (proj.rank_deficient) std::cerr << "[project] rank < 2: second axis set to zero\n";
  return proj;
}

void write_projection_csv(const std::filesystem::path& path, std::span<const std::string> ids,
                          std::span<const std::string> labels, const Projection& proj,
                          const std::string& config_echo) {
  if (ids.size() != proj.coords.size() || labels.size() != proj.coords.size()) {
    throw ValidationError("write_projection_csv: length mismatch");
  }
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw ValidationError("cannot open for writing: " + path.string());
  if (!config_echo.empty()) out << "# " << config_echo << '\n';
  out << "id,label,x,y\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out << ids[i] << ',' << labels[i] << ',' << format_number(proj.coords[i].first) << ','
        << format_number(proj.coords[i].second) << '\n';
  }
}

}  // namespace vtalign
