// Copyright 2026 The vtalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "vtalign/dataio.hpp"
#include "vtalign/netmath.hpp"
#include "vtalign/rng.hpp"
#include "vtalign/tensor.hpp"

namespace vtalign {

/// Architecture of the two-branch embedder. d_c and d_s are dataset-level
/// values; the rest default to the published training recipe.
struct ModelConfig {
  std::size_t d_c = 4096;
  std::size_t d_s = 768;
  std::size_t d_model = 512;
  std::size_t heads = 2;
  std::size_t layers = 1;
  std::size_t d_ff = 0;  // 0 means 4 * d_model
  std::size_t d_emb = 128;
  double ln_eps = 1e-5;
  double dropout = 0.0;
  std::size_t max_rows = 480;

  std::size_t ffn_width() const { return d_ff == 0 ? 4 * d_model : d_ff; }

  /// Throws ValidationError on inconsistent dimensions.
  void validate() const;

  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);

  bool operator==(const ModelConfig&) const = default;
};

template <class T>
struct EncoderLayerParams {
  AttentionParams<T> attn;
  FfnParams<T> ffn;
  Mat<T> ln1_gain, ln1_bias, ln2_gain, ln2_bias;
};

/// All learnable tensors. Biases are 1 x n rows.
///   - w_r, b_r: stack reduction d_c -> d_model
///   - layers: post-norm transformer encoder blocks
///   - w_v, b_v: visual projection d_model -> d_emb
///   - w_s, b_s: sentence projection d_s -> d_emb
template <class T>
struct ModelParams {
  Mat<T> w_r, b_r;
  std::vector<EncoderLayerParams<T>> layers;
  Mat<T> w_v, b_v;
  Mat<T> w_s, b_s;

  /// Correctly shaped, all-zero tensors (gradient accumulators).
  static ModelParams zeros(const ModelConfig& cfg);

  /// Visits every tensor with its checkpoint name, in a fixed order.
  template <class F>
  void for_each(F&& f) {
    visit(*this, f);
  }
  template <class F>
  void for_each(F&& f) const {
    visit(*this, f);
  }

  std::size_t parameter_count() const;
  void set_zero();

  template <class U>
  ModelParams<U> cast() const;

 private:
  template <class Self, class F>
  static void visit(Self& self, F& f) {
    f(std::string("W_r"), self.w_r);
    f(std::string("b_r"), self.b_r);
    for (std::size_t l = 0; l < self.layers.size(); ++l) {
      auto& layer = self.layers[l];
      const std::string pre = "enc" + std::to_string(l) + ".";
      for (std::size_t h = 0; h < layer.attn.heads(); ++h) {
        f(pre + "attn.W_q." + std::to_string(h), layer.attn.wq[h]);
        f(pre + "attn.W_k." + std::to_string(h), layer.attn.wk[h]);
        f(pre + "attn.W_v." + std::to_string(h), layer.attn.wv[h]);
      }
      f(pre + "attn.W_o", layer.attn.wo);
      f(pre + "ffn.W_1", layer.ffn.w1);
      f(pre + "ffn.b_1", layer.ffn.b1);
      f(pre + "ffn.W_2", layer.ffn.w2);
      f(pre + "ffn.b_2", layer.ffn.b2);
      f(pre + "ln1.gain", layer.ln1_gain);
      f(pre + "ln1.bias", layer.ln1_bias);
      f(pre + "ln2.gain", layer.ln2_gain);
      f(pre + "ln2.bias", layer.ln2_bias);
    }
    f(std::string("W_v"), self.w_v);
    f(std::string("b_v"), self.b_v);
    f(std::string("W_s"), self.w_s);
    f(std::string("b_s"), self.b_s);
  }
};

/// Glorot-uniform weights, zero biases, unit layer-norm gains.
ModelParams<float> init_params(const ModelConfig& cfg, std::uint64_t seed);

/// name -> (rows, cols) for every tensor of the architecture.
std::map<std::string, std::pair<long, long>> expected_shapes(const ModelConfig& cfg);

Checkpoint to_checkpoint(const ModelParams<float>& p, std::string config_echo);

/// Throws ValidationError if names or shapes disagree with `cfg`.
ModelParams<float> from_checkpoint(const Checkpoint& ckpt, const ModelConfig& cfg);

// --- visual branch ---------------------------------------------------------

template <class T>
struct VemCache {
  struct Layer {
    Mat<T> input;
    MhaCache<T> mha;
    Mat<T> attn_drop;  // empty when dropout is off
    LayerNormCache<T> ln1;
    Mat<T> h1;
    FfnCache<T> ffn;
    Mat<T> ffn_drop;
    LayerNormCache<T> ln2;
  };
  Mat<T> stack;
  Mat<T> reduce_pre;
  Mask mask;
  std::vector<Layer> layers;
  Mat<T> encoded;
  Mat<T> pooled;
  Mat<T> proj_pre;
};

/// ReLU(mean(encoder(PE + ReLU(stack W_r + b_r))) W_v + b_v) over the rows
/// flagged valid in `mask`. Returns a 1 x d_emb non-negative row. Dropout is
/// applied only when cfg.dropout > 0 and `dropout_rng` is given.
template <class T>
Mat<T> vem_forward(const Mat<T>& stack, const ModelParams<T>& p, const ModelConfig& cfg, const Mask& mask,
                   VemCache<T>* cache = nullptr, Rng* dropout_rng = nullptr);

/// Convenience overload: all rows valid.
template <class T>
Mat<T> vem_forward(const Mat<T>& stack, const ModelParams<T>& p, const ModelConfig& cfg) {
  return vem_forward(stack, p, cfg, Mask::all_valid(static_cast<std::size_t>(stack.rows())));
}

/// Accumulates parameter gradients of <dout, vem_forward(...)> into `grads`.
template <class T>
void vem_backward(const VemCache<T>& cache, const ModelParams<T>& p, const ModelConfig& cfg, const Mat<T>& dout,
                  ModelParams<T>& grads);

// --- sentence branch -------------------------------------------------------

/// ReLU(s W_s + b_s). `s` is a 1 x d_s row. If `pre` is non-null the
/// pre-activation is stored for the backward pass.
template <class T>
Mat<T> sem_forward(const Mat<T>& s, const ModelParams<T>& p, Mat<T>* pre = nullptr);

template <class T>
void sem_backward(const Mat<T>& s, const Mat<T>& pre, const Mat<T>& dout, ModelParams<T>& grads);

// --- stacks and batches ----------------------------------------------------

/// Rows [first, first + count) of `features`, capped at `max_rows`. Longer
/// windows are cropped: at a seeded random offset when `train_rng` is given,
/// centered otherwise.
Matrix select_rows(const Matrix& features, std::size_t first, std::size_t count, std::size_t max_rows,
                   Rng* train_rng = nullptr);

/// Pads every stack with zero rows to the batch maximum, masks the padding,
/// and runs the visual branch on each. Errors name the offending item.
std::vector<Matrix> embed_batch(const std::vector<Matrix>& stacks, const ModelParams<float>& p,
                                const ModelConfig& cfg);

}  // namespace vtalign
