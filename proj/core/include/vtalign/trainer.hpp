// Copyright 2026 The vtalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vtalign/dataio.hpp"
#include "vtalign/embedder.hpp"
#include "vtalign/miner.hpp"

namespace vtalign {

struct TrainConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double adam_eps = 1e-8;
  double weight_decay = 1e-5;
  std::size_t batch_size = 128;
  std::size_t epochs = 25;
  std::size_t early_stop_patience = 10;
  double margin = 1.0;
  std::uint64_t seed = 0;
  double val_fraction = 0.1;
  std::size_t threads = 1;
  bool record_wall_time = true;

  void validate() const;
  std::string to_json() const;
};

// --- loss ------------------------------------------------------------------

/// max(|v - pos| - |v - neg| + margin, 0) with Euclidean distances.
template <class T>
T triplet_loss(std::span<const T> v, std::span<const T> pos, std::span<const T> neg, T margin);

template <class T>
struct TripletGrad {
  T loss = T(0);
  bool active = false;  // hinge argument >= 0
  Mat<T> dv, dpos, dneg;
};

/// Loss and its gradient w.r.t. the three embeddings. The gradient is zero
/// when the hinge argument is strictly negative; at exactly zero the active
/// branch is used. A zero distance contributes a zero subgradient.
template <class T>
TripletGrad<T> triplet_loss_grad(const Mat<T>& v, const Mat<T>& pos, const Mat<T>& neg, T margin);

/// Inputs of one triplet after window slicing.
template <class T>
struct TripletInputs {
  Mat<T> stack;     // t x d_c
  Mat<T> positive;  // 1 x d_s
  Mat<T> negative;  // 1 x d_s
};

/// Mean triplet loss over `batch`; when `grads` is non-null the gradient of
/// that mean is accumulated into it. `dropout_seed` keys per-item dropout
/// masks (used only when cfg.dropout > 0). Items are summed in a fixed
/// number of contiguous chunks, so the result does not depend on `threads`.
template <class T>
T batch_loss(std::span<const TripletInputs<T>> batch, const ModelParams<T>& p, const ModelConfig& cfg, T margin,
             ModelParams<T>* grads = nullptr, std::optional<std::uint64_t> dropout_seed = std::nullopt,
             std::size_t threads = 1);

// --- optimizer -------------------------------------------------------------

struct OptimState {
  ModelParams<float> m;
  ModelParams<float> v;
  std::uint64_t step = 0;

  static OptimState for_params(const ModelConfig& cfg);
};

/// Adam with bias correction and decoupled weight decay:
///   p <- p * (1 - lr * wd);  p <- p - lr * m_hat / (sqrt(v_hat) + eps).
/// Throws NumericError on a non-finite gradient.
void adamw_step(ModelParams<float>& params, const ModelParams<float>& grads, OptimState& state,
                const TrainConfig& cfg);

// --- training loop ---------------------------------------------------------

/// Feature stacks and sentence vectors needed to materialize triplets.
class TrainingData {
 public:
  /// Loads every video referenced by `triplets` and validates the records
  /// against the manifest.
  TrainingData(const DatasetManifest& manifest, Matrix sentence_table, std::span<const TripletRecord> triplets);

  /// Window rows for `r`; longer than cfg.max_rows is cropped (randomly when
  /// `crop_rng` is given, centered otherwise).
  TripletInputs<float> materialize(const TripletRecord& r, const ModelConfig& cfg, Rng* crop_rng = nullptr) const;

  const Matrix& sentences() const { return sentences_; }
  std::size_t feature_dim() const { return static_cast<std::size_t>(feature_dim_); }

 private:
  std::map<std::string, Matrix> features_;
  Matrix sentences_;
  Eigen::Index feature_dim_ = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double seconds = 0.0;
};

struct LossTrace {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 1-based epoch whose parameters were kept

  /// CSV `epoch,train_loss,val_loss,seconds`, optional `# ` config line.
  void write_csv(const std::filesystem::path& path, const std::string& config_echo) const;
};

struct TrainResult {
  ModelParams<float> params;  // best-validation parameters
  LossTrace trace;
  std::size_t train_triplets = 0;
  std::size_t val_triplets = 0;
};

/// True when `video_id` falls in the validation split (seeded hash).
bool in_validation_split(const std::string& video_id, std::uint64_t seed, double val_fraction);

/// Seeded-shuffled minibatch AdamW on the mean triplet loss with early
/// stopping on held-out validation loss. Starts from `init` when given,
/// otherwise from init_params(cfg, train.seed).
TrainResult train(const DatasetManifest& manifest, const Matrix& sentence_table,
                  std::span<const TripletRecord> triplets, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                  std::optional<ModelParams<float>> init = std::nullopt);

}  // namespace vtalign
