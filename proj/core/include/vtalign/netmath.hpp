// Copyright 2026 The vtalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "vtalign/tensor.hpp"

// Numeric kernels for the transformer encoder and the joint projections.
//
// Every kernel is a pure function templated on the scalar type (instantiated
// for float and double). Kernels that sit on the training path come with a
// `*_backward` that maps an upstream gradient to input and parameter
// gradients. Parameter gradients are accumulated (+=) into caller-owned
// tensors so batches can sum without temporaries.

namespace vtalign {

// --- elementwise -----------------------------------------------------------

template <class T>
Mat<T> relu(const Mat<T>& x);

/// Gradient through ReLU given its pre-activation input.
template <class T>
Mat<T> relu_backward(const Mat<T>& pre, const Mat<T>& dy);

// --- affine ----------------------------------------------------------------

/// y = x W + b, with `b` a 1 x W.cols() row broadcast over rows.
template <class T>
Mat<T> affine(const Mat<T>& x, const Mat<T>& w, const Mat<T>& b);

/// dx = dy W^T, dW += x^T dy, db += column sums of dy.
template <class T>
Mat<T> affine_backward(const Mat<T>& x, const Mat<T>& w, const Mat<T>& dy, Mat<T>& dw, Mat<T>& db);

// --- softmax ---------------------------------------------------------------

/// Row-wise softmax with max subtraction.
template <class T>
Mat<T> softmax_rows(const Mat<T>& x);

/// Row-wise softmax where columns with mask[c] == false get weight exactly 0.
template <class T>
Mat<T> masked_softmax_rows(const Mat<T>& x, const Mask& column_mask);

/// dx given the softmax output y and dy: y * (dy - rowsum(dy * y)).
template <class T>
Mat<T> softmax_rows_backward(const Mat<T>& y, const Mat<T>& dy);

// --- positional encoding ---------------------------------------------------

/// Sinusoidal table: PE[pos, 2i] = sin(pos / 10000^(2i/d)),
/// PE[pos, 2i+1] = cos(pos / 10000^(2i/d)). d must be even.
template <class T>
Mat<T> positional_encoding(std::size_t t, std::size_t d_model);

// --- attention -------------------------------------------------------------

/// softmax(Q K^T / sqrt(d_k)) V with masked keys excluded. If `weights` is
/// non-null the attention matrix is stored there for the backward pass.
template <class T>
Mat<T> scaled_dot_attention(const Mat<T>& q, const Mat<T>& k, const Mat<T>& v, const Mask& key_mask,
                            Mat<T>* weights = nullptr);

template <class T>
struct AttentionGrads {
  Mat<T> dq, dk, dv;
};

template <class T>
AttentionGrads<T> scaled_dot_attention_backward(const Mat<T>& q, const Mat<T>& k, const Mat<T>& v,
                                                const Mat<T>& weights, const Mat<T>& dy);

/// Per-head projections W_i^Q, W_i^K, W_i^V (d_model x d_k each) and the
/// output projection W^O ((heads * d_k) x d_model).
template <class T>
struct AttentionParams {
  std::vector<Mat<T>> wq, wk, wv;
  Mat<T> wo;

  std::size_t heads() const { return wq.size(); }
  Eigen::Index d_model() const { return wo.cols(); }
  Eigen::Index d_k() const { return wq.empty() ? 0 : wq.front().cols(); }

  static AttentionParams zeros(std::size_t d_model, std::size_t heads);
};

template <class T>
struct MhaCache {
  std::vector<Mat<T>> q, k, v, weights;
  Mat<T> concat;
};

/// Self-attention with Q = K = V = x, heads concatenated then projected by
/// W^O. Output has the shape of `x`.
template <class T>
Mat<T> multi_head_attention(const Mat<T>& x, const AttentionParams<T>& p, const Mask& mask,
                            MhaCache<T>* cache = nullptr);

template <class T>
Mat<T> multi_head_attention_backward(const Mat<T>& x, const AttentionParams<T>& p, const MhaCache<T>& cache,
                                     const Mat<T>& dy, AttentionParams<T>& grads);

// --- position-wise feed-forward -------------------------------------------

template <class T>
struct FfnParams {
  Mat<T> w1, b1, w2, b2;

  static FfnParams zeros(std::size_t d_model, std::size_t d_ff);
};

template <class T>
struct FfnCache {
  Mat<T> hidden_pre;  // x W1 + b1
};

/// max(0, x W1 + b1) W2 + b2, row by row.
template <class T>
Mat<T> ffn(const Mat<T>& x, const FfnParams<T>& p, FfnCache<T>* cache = nullptr);

template <class T>
Mat<T> ffn_backward(const Mat<T>& x, const FfnParams<T>& p, const FfnCache<T>& cache, const Mat<T>& dy,
                    FfnParams<T>& grads);

// --- layer normalization ---------------------------------------------------

template <class T>
struct LayerNormCache {
  Mat<T> xhat;
  std::vector<T> inv_std;
};

/// Per-row standardization (biased variance) followed by gain and bias.
template <class T>
Mat<T> layer_norm(const Mat<T>& x, const Mat<T>& gain, const Mat<T>& bias, T eps,
                  LayerNormCache<T>* cache = nullptr);

template <class T>
Mat<T> layer_norm_backward(const LayerNormCache<T>& cache, const Mat<T>& gain, const Mat<T>& dy, Mat<T>& dgain,
                           Mat<T>& dbias);

// --- pooling ---------------------------------------------------------------

/// Mean over rows whose mask entry is true. Returns a 1 x cols row.
template <class T>
Mat<T> masked_mean_pool(const Mat<T>& x, const Mask& mask);

template <class T>
Mat<T> masked_mean_pool_backward(const Mat<T>& dy, const Mask& mask, Eigen::Index rows);

// --- vector metrics --------------------------------------------------------

/// a.b / (|a||b|), accumulated in double. Throws ValidationError on a
/// zero-norm input or length mismatch.
template <class T>
double cosine_sim(std::span<const T> a, std::span<const T> b);

/// Euclidean distance. Throws ValidationError on length mismatch.
template <class T>
T l2_dist(std::span<const T> a, std::span<const T> b);

template <class T>
std::span<const T> row_span(const Mat<T>& m, Eigen::Index r = 0) {
  return {m.data() + r * m.cols(), static_cast<std::size_t>(m.cols())};
}

}  // namespace vtalign
