// Copyright 2026 The vtalign Authors
// SPDX-License-Identifier: Apache-2.0

#include "vtalign/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>

#include "json.hpp"
#include "vtalign/parallel.hpp"
#include "vtalign/textio.hpp"

namespace vtalign {

using json = nlohmann::json;

namespace {
constexpr std::size_t kGradChunks = 8;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ValidationError("train config: " + m); };
  if (!(lr > 0.0)) fail("lr must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) fail("betas must be in (0, 1)");
  if (!(adam_eps > 0.0)) fail("adam_eps must be positive");
  if (weight_decay < 0.0) fail("weight_decay must be >= 0");
  if (batch_size == 0) fail("batch_size must be >= 1");
  if (epochs == 0) fail("epochs must be >= 1");
  if (early_stop_patience == 0 || early_stop_patience > epochs) fail("patience must be in [1, epochs]");
  if (margin < 0.0) fail("margin must be >= 0");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) fail("val_fraction must be in (0, 1)");
}

std::string TrainConfig::to_json() const {
  return json{{"lr", lr},
              {"beta1", beta1},
              {"beta2", beta2},
              {"adam_eps", adam_eps},
              {"weight_decay", weight_decay},
              {"batch_size", batch_size},
              {"epochs", epochs},
              {"early_stop_patience", early_stop_patience},
              {"margin", margin},
              {"seed", seed},
              {"val_fraction", val_fraction}}
      .dump();
}

template <class T>
T triplet_loss(std::span<const T> v, std::span<const T> pos, std::span<const T> neg, T margin) {
  if (v.size() != pos.size() || v.size() != neg.size()) throw ValidationError("triplet_loss: dimension mismatch");
  return std::max(l2_dist(v, pos) - l2_dist(v, neg) + margin, T(0));
}

template <class T>
TripletGrad<T> triplet_loss_grad(const Mat<T>& v, const Mat<T>& pos, const Mat<T>& neg, T margin) {
  if (v.size() != pos.size() || v.size() != neg.size()) throw ValidationError("triplet_loss: dimension mismatch");
  TripletGrad<T> g;
  const Mat<T> to_pos = v - pos;
  const Mat<T> to_neg = v - neg;
  const T d_pos = to_pos.norm();
  const T d_neg = to_neg.norm();
  const T arg = d_pos - d_neg + margin;
  g.dv = Mat<T>::Zero(v.rows(), v.cols());
  g.dpos = Mat<T>::Zero(v.rows(), v.cols());
  g.dneg = Mat<T>::Zero(v.rows(), v.cols());
  if (arg < T(0)) return g;
  g.active = true;
  g.loss = arg;
  if (d_pos > T(0)) {
    g.dv += to_pos / d_pos;
    g.dpos -= to_pos / d_pos;
  }
  if (d_neg > T(0)) {
    g.dv -= to_neg / d_neg;
    g.dneg += to_neg / d_neg;
  }
  return g;
}

template <class T>
T batch_loss(std::span<const TripletInputs<T>> batch, const ModelParams<T>& p, const ModelConfig& cfg, T margin,
             ModelParams<T>* grads, std::optional<std::uint64_t> dropout_seed, std::size_t threads) {
  if (batch.empty()) throw ValidationError("batch_loss: empty batch");
  const std::size_t n = batch.size();
  const std::size_t chunks = std::min(kGradChunks, n);
  const T inv_n = T(1) / static_cast<T>(n);
  std::vector<T> chunk_loss(chunks, T(0));
  std::vector<ModelParams<T>> chunk_grads;
  if (grads) chunk_grads.assign(chunks, ModelParams<T>::zeros(cfg));

  parallel_for(chunks, threads, [&](std::size_t c) {
    const std::size_t begin = c * n / chunks;
    const std::size_t end = (c + 1) * n / chunks;
    for (std::size_t i = begin; i < end; ++i) {
      const TripletInputs<T>& item = batch[i];
      std::optional<Rng> drop_rng;
      if (dropout_seed) drop_rng.emplace(derive_seed(*dropout_seed, i));
      VemCache<T> vcache;
      Mat<T> pre_pos, pre_neg;
      const Mat<T> v = vem_forward(item.stack, p, cfg, Mask::all_valid(static_cast<std::size_t>(item.stack.rows())),
                                   grads ? &vcache : nullptr, drop_rng ? &*drop_rng : nullptr);
      const Mat<T> sp = sem_forward(item.positive, p, &pre_pos);
      const Mat<T> sn = sem_forward(item.negative, p, &pre_neg);
      const TripletGrad<T> g = triplet_loss_grad(v, sp, sn, margin);
      chunk_loss[c] += g.loss;
      if (grads && g.active) {
        ModelParams<T>& acc = chunk_grads[c];
        vem_backward(vcache, p, cfg, Mat<T>(g.dv * inv_n), acc);
        sem_backward(item.positive, pre_pos, Mat<T>(g.dpos * inv_n), acc);
        sem_backward(item.negative, pre_neg, Mat<T>(g.dneg * inv_n), acc);
      }
    }
  });

  T total = T(0);
  for (std::size_t c = 0; c < chunks; ++c) {
    total += chunk_loss[c];
    if (grads) {
      std::vector<Mat<T>*> dst;
      grads->for_each([&](const std::string&, Mat<T>& m) { dst.push_back(&m); });
      std::size_t k = 0;
      chunk_grads[c].for_each([&](const std::string&, const Mat<T>& m) { *dst[k++] += m; });
    }
  }
  return total * inv_n;
}

template float triplet_loss(std::span<const float>, std::span<const float>, std::span<const float>, float);
template double triplet_loss(std::span<const double>, std::span<const double>, std::span<const double>, double);
template TripletGrad<float> triplet_loss_grad(const Mat<float>&, const Mat<float>&, const Mat<float>&, float);
template TripletGrad<double> triplet_loss_grad(const Mat<double>&, const Mat<double>&, const Mat<double>&, double);
template float batch_loss(std::span<const TripletInputs<float>>, const ModelParams<float>&, const ModelConfig&,
                          float, ModelParams<float>*, std::optional<std::uint64_t>, std::size_t);
template double batch_loss(std::span<const TripletInputs<double>>, const ModelParams<double>&, const ModelConfig&,
                           double, ModelParams<double>*, std::optional<std::uint64_t>, std::size_t);

OptimState OptimState::for_params(const ModelConfig& cfg) {
  return OptimState{ModelParams<float>::zeros(cfg), ModelParams<float>::zeros(cfg), 0};
}

void adamw_step(ModelParams<float>& params, const ModelParams<float>& grads, OptimState& state,
                const TrainConfig& cfg) {
  std::vector<const Matrix*> g;
  grads.for_each([&](const std::string& name, const Matrix& m) {
    if (!m.allFinite()) throw NumericError("adamw_step: non-finite gradient in " + name);
    g.push_back(&m);
  });
  std::vector<Matrix*> m1, m2;
  state.m.for_each([&](const std::string&, Matrix& m) { m1.push_back(&m); });
  state.v.for_each([&](const std::string&, Matrix& m) { m2.push_back(&m); });

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  const double decay = 1.0 - cfg.lr * cfg.weight_decay;

  std::size_t k = 0;
  params.for_each([&](const std::string& name, Matrix& p) {
    const Matrix& gk = *g.at(k);
    Matrix& mk = *m1.at(k);
    Matrix& vk = *m2.at(k);
    if (gk.rows() != p.rows() || gk.cols() != p.cols()) {
      throw ValidationError("adamw_step: gradient shape mismatch for " + name);
    }
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      const double grad = gk.data()[i];
      const double m = cfg.beta1 * mk.data()[i] + (1.0 - cfg.beta1) * grad;
      const double v = cfg.beta2 * vk.data()[i] + (1.0 - cfg.beta2) * grad * grad;
      mk.data()[i] = static_cast<float>(m);
      vk.data()[i] = static_cast<float>(v);
      const double m_hat = m / bc1;
      const double v_hat = v / bc2;
      double w = static_cast<double>(p.data()[i]) * decay;
      w -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
      p.data()[i] = static_cast<float>(w);
    }
    ++k;
  });
}

TrainingData::TrainingData(const DatasetManifest& manifest, Matrix sentence_table,
                           std::span<const TripletRecord> triplets)
    : sentences_(std::move(sentence_table)) {
  if (sentences_.rows() != static_cast<Eigen::Index>(manifest.sentence_count)) {
    throw ValidationError("training data: sentence table does not match manifest");
  }
  feature_dim_ = manifest.feature_dim;
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    const TripletRecord& r = triplets[i];
    const std::string where = "triplet " + std::to_string(i);
    if (r.positive_id >= manifest.sentence_count || r.negative_id >= manifest.sentence_count) {
      throw ValidationError(where + ": dangling sentence reference");
    }
    if (r.positive_id == r.negative_id) throw ValidationError(where + ": positive equals negative");
    if (features_.count(r.video_id)) continue;
    const auto vi = manifest.find_video(r.video_id);
    if (!vi) throw ValidationError(where + ": unknown video_id \"" + r.video_id + "\"");
    features_.emplace(r.video_id, manifest.load_features(*vi));
  }
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    const TripletRecord& r = triplets[i];
    const Eigen::Index rows = features_.at(r.video_id).rows();
    if (!(r.start_s >= 0.0 && r.end_s > r.start_s && r.end_s <= static_cast<double>(rows))) {
      throw ValidationError("triplet " + std::to_string(i) + ": window outside video " + r.video_id);
    }
  }
}

TripletInputs<float> TrainingData::materialize(const TripletRecord& r, const ModelConfig& cfg, Rng* crop_rng) const {
  const Matrix& feats = features_.at(r.video_id);
  const auto [first, count] = segment_rows(r.start_s, r.end_s, static_cast<std::size_t>(feats.rows()));
  return TripletInputs<float>{select_rows(feats, first, count, cfg.max_rows, crop_rng),
                              sentences_.row(r.positive_id), sentences_.row(r.negative_id)};
}

void LossTrace::write_csv(const std::filesystem::path& path, const std::string& config_echo) const {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw ValidationError("cannot open for writing: " + path.string());
  if (!config_echo.empty()) out << "# " << config_echo << '\n';
  out << "epoch,train_loss,val_loss,seconds\n";
  for (const auto& e : epochs) {
    out << e.epoch << ',' << format_number(e.train_loss) << ',' << format_number(e.val_loss) << ','
        << format_number(e.seconds) << '\n';
  }
  if (!out) throw ValidationError("write failed: " + path.string());
}

bool in_validation_split(const std::string& video_id, std::uint64_t seed, double val_fraction) {
  const std::uint64_t h = derive_seed(seed, hash_string(video_id));
  const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
  return u < val_fraction;
}

namespace {

double dataset_loss(const TrainingData& data, std::span<const TripletRecord> records, std::span<const std::size_t> idx,
                    const ModelParams<float>& p, const ModelConfig& cfg, const TrainConfig& tc) {
  double total = 0.0;
  const std::size_t step = std::max<std::size_t>(tc.batch_size, 1);
  for (std::size_t b = 0; b < idx.size(); b += step) {
    const std::size_t end = std::min(idx.size(), b + step);
    std::vector<TripletInputs<float>> batch;
    for (std::size_t i = b; i < end; ++i) batch.push_back(data.materialize(records[idx[i]], cfg));
    const float mean = batch_loss<float>(batch, p, cfg, static_cast<float>(tc.margin), nullptr, std::nullopt,
                                         tc.threads);
    total += static_cast<double>(mean) * static_cast<double>(end - b);
  }
  return total / static_cast<double>(idx.size());
}

}  // namespace

TrainResult train(const DatasetManifest& manifest, const Matrix& sentence_table,
                  std::span<const TripletRecord> triplets, const ModelConfig& model_cfg, const TrainConfig& tc,
                  std::optional<ModelParams<float>> init) {
  model_cfg.validate();
  tc.validate();
  if (triplets.empty()) throw ValidationError("train: no triplets");
  if (model_cfg.d_c != manifest.feature_dim) {
    throw ValidationError("train: model d_c=" + std::to_string(model_cfg.d_c) + " but features have " +
                          std::to_string(manifest.feature_dim) + " columns");
  }
  if (model_cfg.d_s != manifest.sentence_dim) {
    throw ValidationError("train: model d_s=" + std::to_string(model_cfg.d_s) + " but sentences have " +
                          std::to_string(manifest.sentence_dim) + " columns");
  }
  const TrainingData data(manifest, sentence_table, triplets);

  std::vector<std::size_t> train_idx, val_idx;
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    (in_validation_split(triplets[i].video_id, tc.seed, tc.val_fraction) ? val_idx : train_idx).push_back(i);
  }
  if (val_idx.empty()) throw ValidationError("train: empty validation split (too few distinct videos?)");
  if (train_idx.empty()) throw ValidationError("train: empty training split");

  TrainResult result;
  result.train_triplets = train_idx.size();
  result.val_triplets = val_idx.size();
  ModelParams<float> params = init ? std::move(*init) : init_params(model_cfg, tc.seed);
  if (init) {
    // Shapes must match the requested architecture.
    const auto want = expected_shapes(model_cfg);
    params.for_each([&](const std::string& name, const Matrix& m) {
      auto it = want.find(name);
      if (it == want.end() || it->second.first != m.rows() || it->second.second != m.cols()) {
        throw ValidationError("train: initial parameters do not match architecture at " + name);
      }
    });
  }
  ModelParams<float> best = params;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  OptimState state = OptimState::for_params(model_cfg);
  ModelParams<float> grads = ModelParams<float>::zeros(model_cfg);

  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> order = train_idx;
    Rng order_rng(derive_seed(tc.seed, hash_string("epoch"), epoch));
    shuffle(order, order_rng);

    double train_total = 0.0;
    std::size_t batch_no = 0;
    for (std::size_t b = 0; b < order.size(); b += tc.batch_size, ++batch_no) {
      const std::size_t end = std::min(order.size(), b + tc.batch_size);
      const std::uint64_t batch_seed = derive_seed(tc.seed, epoch, batch_no);
      Rng crop_rng(batch_seed);
      std::vector<TripletInputs<float>> batch;
      batch.reserve(end - b);
      for (std::size_t i = b; i < end; ++i) batch.push_back(data.materialize(triplets[order[i]], model_cfg, &crop_rng));
      grads.set_zero();
      const float loss = batch_loss<float>(batch, params, model_cfg, static_cast<float>(tc.margin), &grads,
                                           derive_seed(batch_seed, hash_string("dropout")), tc.threads);
      if (!std::isfinite(loss)) {
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_no));
      }
      adamw_step(params, grads, state, tc);
      train_total += static_cast<double>(loss) * static_cast<double>(end - b);
    }
    const double train_loss = train_total / static_cast<double>(order.size());
    const double val_loss = dataset_loss(data, triplets, val_idx, params, model_cfg, tc);
    if (!std::isfinite(val_loss)) throw NumericError("train: non-finite validation loss");
    const double secs =
        tc.record_wall_time ? std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() : 0.0;
    result.trace.epochs.push_back({epoch, train_loss, val_loss, secs});
    std::cerr << "[train] epoch " << epoch << " train_loss=" << train_loss << " val_loss=" << val_loss << '\n';

    if (val_loss < best_val) {
      best_val = val_loss;
      best = params;
      result.trace.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= tc.early_stop_patience) {
      std::cerr << "[train] early stop after epoch " << epoch << " (best epoch " << result.trace.best_epoch << ")\n";
      break;
    }
  }
  result.params = std::move(best);
  return result;
}

}  // namespace vtalign
