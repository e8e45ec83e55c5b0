// Copyright 2026 The vtalign Authors
// SPDX-License-Identifier: Apache-2.0

#include "vtalign/netmath.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace vtalign {

namespace {

void require_shape(bool ok, const char* op, const std::string& detail) {
  if (!ok) throw ValidationError(std::string(op) + ": shape mismatch (" + detail + ")");
}

template <class T>
std::string dims(const Mat<T>& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

template <class T>
Mat<T> relu(const Mat<T>& x) {
  return x.cwiseMax(T(0));
}

template <class T>
Mat<T> relu_backward(const Mat<T>& pre, const Mat<T>& dy) {
  return (pre.array() > T(0)).select(dy, T(0));
}

template <class T>
Mat<T> affine(const Mat<T>& x, const Mat<T>& w, const Mat<T>& b) {
  require_shape(x.cols() == w.rows(), "affine", "x " + dims(x) + " vs W " + dims(w));
  require_shape(b.rows() == 1 && b.cols() == w.cols(), "affine", "b " + dims(b) + " vs W " + dims(w));
  Mat<T> y = x * w;
  y.rowwise() += b.row(0);
  return y;
}

template <class T>
Mat<T> affine_backward(const Mat<T>& x, const Mat<T>& w, const Mat<T>& dy, Mat<T>& dw, Mat<T>& db) {
  dw.noalias() += x.transpose() * dy;
  db += dy.colwise().sum();
  return dy * w.transpose();
}

template <class T>
Mat<T> softmax_rows(const Mat<T>& x) {
  Mat<T> y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const T mx = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - mx).exp();
    y.row(r) /= y.row(r).sum();
  }
  return y;
}

template <class T>
Mat<T> masked_softmax_rows(const Mat<T>& x, const Mask& column_mask) {
  require_shape(static_cast<std::size_t>(x.cols()) == column_mask.size(), "masked_softmax_rows",
                "cols " + std::to_string(x.cols()) + " vs mask " + std::to_string(column_mask.size()));
  if (column_mask.count_valid() == 0) throw ValidationError("attention: all-masked key set");
  Mat<T> y = Mat<T>::Zero(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    T mx = -std::numeric_limits<T>::infinity();
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (column_mask[static_cast<std::size_t>(c)]) mx = std::max(mx, x(r, c));
    }
    T sum = T(0);
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (column_mask[static_cast<std::size_t>(c)]) {
        y(r, c) = std::exp(x(r, c) - mx);
        sum += y(r, c);
      }
    }
    y.row(r) /= sum;
  }
  return y;
}

template <class T>
Mat<T> softmax_rows_backward(const Mat<T>& y, const Mat<T>& dy) {
  Mat<T> dx(y.rows(), y.cols());
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    const T dot = y.row(r).dot(dy.row(r));
    dx.row(r) = y.row(r).array() * (dy.row(r).array() - dot);
  }
  return dx;
}

template <class T>
Mat<T> positional_encoding(std::size_t t, std::size_t d_model) {
  if (t < 1) throw ValidationError("positional_encoding: t must be >= 1");
  if (d_model == 0 || d_model % 2 != 0) {
    throw ValidationError("positional_encoding: d_model must be even, got " + std::to_string(d_model));
  }
  Mat<T> pe(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(d_model));
  for (std::size_t pos = 0; pos < t; ++pos) {
    for (std::size_t i = 0; i < d_model / 2; ++i) {
      const double freq = std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d_model));
      const double angle = static_cast<double>(pos) / freq;
      pe(pos, 2 * i) = static_cast<T>(std::sin(angle));
      pe(pos, 2 * i + 1) = static_cast<T>(std::cos(angle));
    }
  }
  return pe;
}

template <class T>
Mat<T> scaled_dot_attention(const Mat<T>& q, const Mat<T>& k, const Mat<T>& v, const Mask& key_mask,
                            Mat<T>* weights) {
  require_shape(q.cols() == k.cols(), "scaled_dot_attention", "Q " + dims(q) + " vs K " + dims(k));
  require_shape(k.rows() == v.rows(), "scaled_dot_attention", "K " + dims(k) + " vs V " + dims(v));
  require_shape(static_cast<std::size_t>(k.rows()) == key_mask.size(), "scaled_dot_attention",
                "mask length " + std::to_string(key_mask.size()));
  const T scale = T(1) / std::sqrt(static_cast<T>(q.cols()));
  Mat<T> scores = (q * k.transpose()) * scale;
  Mat<T> w = masked_softmax_rows(scores, key_mask);
  Mat<T> out = w * v;
  if (weights) *weights = std::move(w);
  return out;
}

template <class T>
AttentionGrads<T> scaled_dot_attention_backward(const Mat<T>& q, const Mat<T>& k, const Mat<T>& v,
                                                const Mat<T>& weights, const Mat<T>& dy) {
  const T scale = T(1) / std::sqrt(static_cast<T>(q.cols()));
  AttentionGrads<T> g;
  g.dv = weights.transpose() * dy;
  const Mat<T> dweights = dy * v.transpose();
  const Mat<T> dscores = softmax_rows_backward(weights, dweights) * scale;
  g.dq = dscores * k;
  g.dk = dscores.transpose() * q;
  return g;
}

template <class T>
AttentionParams<T> AttentionParams<T>::zeros(std::size_t d_model, std::size_t heads) {
  if (heads == 0 || d_model % heads != 0) {
    throw ValidationError("attention: d_model " + std::to_string(d_model) + " not divisible by heads " +
                          std::to_string(heads));
  }
  const auto dm = static_cast<Eigen::Index>(d_model);
  const auto dk = static_cast<Eigen::Index>(d_model / heads);
  AttentionParams p;
  for (std::size_t h = 0; h < heads; ++h) {
    p.wq.push_back(Mat<T>::Zero(dm, dk));
    p.wk.push_back(Mat<T>::Zero(dm, dk));
    p.wv.push_back(Mat<T>::Zero(dm, dk));
  }
  p.wo = Mat<T>::Zero(dk * static_cast<Eigen::Index>(heads), dm);
  return p;
}

template <class T>
Mat<T> multi_head_attention(const Mat<T>& x, const AttentionParams<T>& p, const Mask& mask, MhaCache<T>* cache) {
  require_shape(p.heads() > 0, "multi_head_attention", "no heads");
  require_shape(x.cols() == p.wq.front().rows(), "multi_head_attention",
                "x " + dims(x) + " vs W^Q " + dims(p.wq.front()));
  const Eigen::Index dk = p.d_k();
  const auto heads = static_cast<Eigen::Index>(p.heads());
  require_shape(p.wo.rows() == dk * heads, "multi_head_attention", "W^O " + dims(p.wo));
  Mat<T> concat(x.rows(), dk * heads);
  if (cache) {
    cache->q.resize(p.heads());
    cache->k.resize(p.heads());
    cache->v.resize(p.heads());
    cache->weights.resize(p.heads());
  }
  for (std::size_t h = 0; h < p.heads(); ++h) {
    Mat<T> q = x * p.wq[h];
    Mat<T> k = x * p.wk[h];
    Mat<T> v = x * p.wv[h];
    Mat<T> w;
    concat.middleCols(static_cast<Eigen::Index>(h) * dk, dk) = scaled_dot_attention(q, k, v, mask, &w);
    if (cache) {
      cache->q[h] = std::move(q);
      cache->k[h] = std::move(k);
      cache->v[h] = std::move(v);
      cache->weights[h] = std::move(w);
    }
  }
  Mat<T> out = concat * p.wo;
  if (cache) cache->concat = std::move(concat);
  return out;
}

template <class T>
Mat<T> multi_head_attention_backward(const Mat<T>& x, const AttentionParams<T>& p, const MhaCache<T>& cache,
                                     const Mat<T>& dy, AttentionParams<T>& grads) {
  const Eigen::Index dk = p.d_k();
  grads.wo.noalias() += cache.concat.transpose() * dy;
  const Mat<T> dconcat = dy * p.wo.transpose();
  Mat<T> dx = Mat<T>::Zero(x.rows(), x.cols());
  for (std::size_t h = 0; h < p.heads(); ++h) {
    const Mat<T> dhead = dconcat.middleCols(static_cast<Eigen::Index>(h) * dk, dk);
    const AttentionGrads<T> g =
        scaled_dot_attention_backward(cache.q[h], cache.k[h], cache.v[h], cache.weights[h], dhead);
    grads.wq[h].noalias() += x.transpose() * g.dq;
    grads.wk[h].noalias() += x.transpose() * g.dk;
    grads.wv[h].noalias() += x.transpose() * g.dv;
    dx.noalias() += g.dq * p.wq[h].transpose();
    dx.noalias() += g.dk * p.wk[h].transpose();
    dx.noalias() += g.dv * p.wv[h].transpose();
  }
  return dx;
}

template <class T>
FfnParams<T> FfnParams<T>::zeros(std::size_t d_model, std::size_t d_ff) {
  const auto dm = static_cast<Eigen::Index>(d_model);
  const auto df = static_cast<Eigen::Index>(d_ff);
  return FfnParams{Mat<T>::Zero(dm, df), Mat<T>::Zero(1, df), Mat<T>::Zero(df, dm), Mat<T>::Zero(1, dm)};
}

template <class T>
Mat<T> ffn(const Mat<T>& x, const FfnParams<T>& p, FfnCache<T>* cache) {
  Mat<T> pre = affine(x, p.w1, p.b1);
  Mat<T> out = affine(relu(pre), p.w2, p.b2);
  if (cache) cache->hidden_pre = std::move(pre);
  return out;
}

template <class T>
Mat<T> ffn_backward(const Mat<T>& x, const FfnParams<T>& p, const FfnCache<T>& cache, const Mat<T>& dy,
                    FfnParams<T>& grads) {
  const Mat<T> hidden = relu(cache.hidden_pre);
  const Mat<T> dhidden = affine_backward(hidden, p.w2, dy, grads.w2, grads.b2);
  const Mat<T> dpre = relu_backward(cache.hidden_pre, dhidden);
  return affine_backward(x, p.w1, dpre, grads.w1, grads.b1);
}

template <class T>
Mat<T> layer_norm(const Mat<T>& x, const Mat<T>& gain, const Mat<T>& bias, T eps, LayerNormCache<T>* cache) {
  require_shape(gain.cols() == x.cols() && bias.cols() == x.cols(), "layer_norm",
                "x " + dims(x) + " gain " + dims(gain));
  const auto n = static_cast<T>(x.cols());
  Mat<T> xhat(x.rows(), x.cols());
  std::vector<T> inv_std(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const T mean = x.row(r).sum() / n;
    const auto centered = (x.row(r).array() - mean).matrix();
    const T var = centered.squaredNorm() / n;
    const T inv = T(1) / std::sqrt(var + eps);
    xhat.row(r) = centered * inv;
    inv_std[static_cast<std::size_t>(r)] = inv;
  }
  Mat<T> y = (xhat.array().rowwise() * gain.row(0).array()).matrix();
  y.rowwise() += bias.row(0);
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

template <class T>
Mat<T> layer_norm_backward(const LayerNormCache<T>& cache, const Mat<T>& gain, const Mat<T>& dy, Mat<T>& dgain,
                           Mat<T>& dbias) {
  const Mat<T>& xhat = cache.xhat;
  dgain += (dy.array() * xhat.array()).colwise().sum().matrix();
  dbias += dy.colwise().sum();
  const Mat<T> dxhat = (dy.array().rowwise() * gain.row(0).array()).matrix();
  const auto n = static_cast<T>(xhat.cols());
  Mat<T> dx(xhat.rows(), xhat.cols());
  for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
    const T sum_d = dxhat.row(r).sum();
    const T sum_dx = dxhat.row(r).dot(xhat.row(r));
    dx.row(r) = (cache.inv_std[static_cast<std::size_t>(r)] / n) *
                (n * dxhat.row(r).array() - sum_d - xhat.row(r).array() * sum_dx).matrix();
  }
  return dx;
}

template <class T>
Mat<T> masked_mean_pool(const Mat<T>& x, const Mask& mask) {
  require_shape(static_cast<std::size_t>(x.rows()) == mask.size(), "masked_mean_pool",
                "rows " + std::to_string(x.rows()) + " vs mask " + std::to_string(mask.size()));
  const std::size_t valid = mask.count_valid();
  if (valid == 0) throw ValidationError("masked_mean_pool: all positions masked");
  Mat<T> out = Mat<T>::Zero(1, x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    if (mask[static_cast<std::size_t>(r)]) out += x.row(r);
  }
  return out / static_cast<T>(valid);
}

template <class T>
Mat<T> masked_mean_pool_backward(const Mat<T>& dy, const Mask& mask, Eigen::Index rows) {
  const T scale = T(1) / static_cast<T>(mask.count_valid());
  Mat<T> dx = Mat<T>::Zero(rows, dy.cols());
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (mask[static_cast<std::size_t>(r)]) dx.row(r) = dy.row(0) * scale;
  }
  return dx;
}

template <class T>
double cosine_sim(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) throw ValidationError("cosine_sim: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = static_cast<double>(a[i]);
    const double y = static_cast<double>(b[i]);
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (na <= 0.0 || nb <= 0.0) throw ValidationError("cosine_sim: zero-norm input");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

template <class T>
T l2_dist(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) throw ValidationError("l2_dist: length mismatch");
  T s = T(0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const T d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

#define VTALIGN_INSTANTIATE(T)                                                                              \
  template Mat<T> relu(const Mat<T>&);                                                                      \
  template Mat<T> relu_backward(const Mat<T>&, const Mat<T>&);                                              \
  template Mat<T> affine(const Mat<T>&, const Mat<T>&, const Mat<T>&);                                      \
  template Mat<T> affine_backward(const Mat<T>&, const Mat<T>&, const Mat<T>&, Mat<T>&, Mat<T>&);           \
  template Mat<T> softmax_rows(const Mat<T>&);                                                              \
  template Mat<T> masked_softmax_rows(const Mat<T>&, const Mask&);                                          \
  template Mat<T> softmax_rows_backward(const Mat<T>&, const Mat<T>&);                                      \
  template Mat<T> positional_encoding<T>(std::size_t, std::size_t);                                         \
  template Mat<T> scaled_dot_attention(const Mat<T>&, const Mat<T>&, const Mat<T>&, const Mask&, Mat<T>*);  \
  template AttentionGrads<T> scaled_dot_attention_backward(const Mat<T>&, const Mat<T>&, const Mat<T>&,     \
                                                           const Mat<T>&, const Mat<T>&);                   \
  template struct AttentionParams<T>;                                                                       \
  template Mat<T> multi_head_attention(const Mat<T>&, const AttentionParams<T>&, const Mask&, MhaCache<T>*); \
  template Mat<T> multi_head_attention_backward(const Mat<T>&, const AttentionParams<T>&, const MhaCache<T>&, \
                                                const Mat<T>&, AttentionParams<T>&);                        \
  template struct FfnParams<T>;                                                                             \
  template Mat<T> ffn(const Mat<T>&, const FfnParams<T>&, FfnCache<T>*);                                    \
  template Mat<T> ffn_backward(const Mat<T>&, const FfnParams<T>&, const FfnCache<T>&, const Mat<T>&,       \
                               FfnParams<T>&);                                                              \
  template Mat<T> layer_norm(const Mat<T>&, const Mat<T>&, const Mat<T>&, T, LayerNormCache<T>*);           \
  template Mat<T> layer_norm_backward(const LayerNormCache<T>&, const Mat<T>&, const Mat<T>&, Mat<T>&,      \
                                      Mat<T>&);                                                             \
  template Mat<T> masked_mean_pool(const Mat<T>&, const Mask&);                                             \
  template Mat<T> masked_mean_pool_backward(const Mat<T>&, const Mask&, Eigen::Index);                      \
  template double cosine_sim(std::span<const T>, std::span<const T>);                                       \
  template T l2_dist(std::span<const T>, std::span<const T>);

VTALIGN_INSTANTIATE(float)
VTALIGN_INSTANTIATE(double)

#undef VTALIGN_INSTANTIATE

}  // namespace vtalign
