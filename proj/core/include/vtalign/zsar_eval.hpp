// Copyright 2026 The vtalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vtalign/dataio.hpp"
#include "vtalign/embedder.hpp"

namespace vtalign {

/// Weights of the visual embedding (alpha) and the object-semantics
/// embedding (beta) in a video's fused embedding.
struct FusionWeights {
  double alpha = 0.8;
  double beta = 0.2;

  void validate() const;
};

struct ClassPrototype {
  std::string class_name;
  Matrix embedding;  // 1 x d_emb, sem_forward of the class sentence
};

/// One prototype per manifest class, in manifest order.
std::vector<ClassPrototype> build_prototypes(const DatasetManifest& manifest, const Matrix& sentence_table,
                                             const ModelParams<float>& p);

/// Mean of the video's object-description sentence vectors (all segments),
/// or nullopt when it has none.
std::optional<Matrix> object_sentence_vector(const VideoEntry& video, const Matrix& sentence_table);

/// alpha * VE(v) + beta * SE(O(v)). VE runs on the full stack (center-cropped
/// to cfg.max_rows). If beta > 0 and the video has no object sentences, the
/// visual term is used alone and `fell_back` is set; with `strict` this is a
/// ValidationError instead.
Matrix vid_embedding(const Matrix& features, const std::optional<Matrix>& object_sentence, const FusionWeights& w,
                     const ModelParams<float>& p, const ModelConfig& cfg, bool strict = false,
                     bool* fell_back = nullptr);

/// Nearest prototype by cosine similarity; ties go to the lexicographically
/// smallest class name. A zero-norm video embedding yields nullopt
/// (abstention). Zero-norm prototypes score 0.
std::optional<std::string> classify(const Matrix& video_embedding, std::span<const ClassPrototype> prototypes);

struct SplitSpec {
  std::size_t k = 0;
  std::size_t runs = 0;
  std::uint64_t seed = 0;
  std::vector<std::vector<std::string>> subsets;  // each sorted
};

/// `runs` independent uniform k-subsets of the classes (names are sorted
/// first, so the result depends only on the set of names and the seed).
/// k == |classes| forces a single run.
SplitSpec make_splits(std::vector<std::string> class_names, std::size_t k, std::size_t runs, std::uint64_t seed);

struct EvalReport {
  std::vector<double> run_accuracy;  // fraction correct per run
  double mean = 0.0;
  double stddev = 0.0;  // population
  std::vector<std::string> classes;  // confusion axis order (sorted)
  std::vector<std::vector<std::size_t>> confusion;  // [truth][predicted]
  std::vector<std::size_t> abstentions;             // per truth class
  std::vector<std::size_t> class_correct;
  std::vector<std::size_t> class_total;
  std::size_t pooled_correct = 0;
  std::size_t pooled_total = 0;
  std::vector<std::string> warnings;
  std::string config_echo;

  double pooled_accuracy() const {
    return pooled_total ? static_cast<double>(pooled_correct) / static_cast<double>(pooled_total) : 0.0;
  }

  std::string to_json() const;
  // Both CSV writers start with a `# <config_echo>` line when it is set.
  /// Header `truth,<class...>` plus `<abstain>` when any abstention occurred.
  void write_confusion_csv(const std::filesystem::path& path) const;
  /// `class,correct,total,accuracy`.
  void write_per_class_csv(const std::filesystem::path& path) const;
};

/// Returns the predicted class for video `index` among `candidates`, or
/// nullopt to abstain.
using Predictor = std::function<std::optional<std::string>(std::size_t index, std::span<const std::string> candidates)>;

/// Split protocol over arbitrary predictions. `truth[i]` is video i's class.
/// Per run, classes without test videos are dropped (with a warning).
EvalReport evaluate_predictions(std::span<const std::string> truth, const SplitSpec& split, const Predictor& predict);

struct EvalOptions {
  bool strict = false;
  std::size_t threads = 1;
};

/// Embeds every labelled video once, then runs the split protocol with
/// nearest-prototype classification restricted to each run's classes.
EvalReport evaluate(const DatasetManifest& manifest, const Matrix& sentence_table,
                    std::span<const ClassPrototype> prototypes, const SplitSpec& split, const FusionWeights& w,
                    const ModelParams<float>& p, const ModelConfig& cfg, const EvalOptions& opts = {});

/// Fraction of labelled videos whose own description sentence (first
/// segment) is nearest, by cosine in raw sentence space, to its class
/// prototype sentence among `classes`.
double raw_sentence_oracle_accuracy(const DatasetManifest& manifest, const Matrix& sentence_table,
                                    std::span<const std::string> classes);

struct Projection {
  std::vector<std::pair<double, double>> coords;
  bool rank_deficient = false;
};

/// Top-2 principal components of the rows of `vectors`. Each axis is
/// flipped so its largest-magnitude coordinate is positive. With rank < 2
/// the second axis is all zeros and `rank_deficient` is set.
Projection pca_project(const Mat<double>& vectors);

/// CSV `id,label,x,y`, preceded by `# <config_echo>` when it is non-empty.
void write_projection_csv(const std::filesystem::path& path, std::span<const std::string> ids,
                          std::span<const std::string> labels, const Projection& proj,
                          const std::string& config_echo = "");

}  // namespace vtalign
