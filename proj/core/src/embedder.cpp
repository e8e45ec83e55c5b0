// Copyright 2026 The vtalign Authors
// SPDX-License-Identifier: Apache-2.0

#include "vtalign/embedder.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace vtalign {

using json = nlohmann::json;

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ValidationError("model config: " + msg); };
  if (d_c == 0 || d_s == 0 || d_model == 0 || d_emb == 0) fail("dimensions must be positive");
  if (heads == 0 || d_model % heads != 0) fail("d_model must be divisible by heads");
  if (d_model % 2 != 0) fail("d_model must be even for the positional encoding");
  if (layers == 0) fail("layers must be >= 1");
  if (!(ln_eps > 0.0)) fail("ln_eps must be positive");
  if (dropout < 0.0 || dropout >= 1.0) fail("dropout must be in [0, 1)");
  if (max_rows == 0) fail("max_rows must be >= 1");
}

std::string ModelConfig::to_json() const {
  json j{{"d_c", d_c},       {"d_s", d_s},         {"d_model", d_model}, {"heads", heads},
         {"layers", layers}, {"d_ff", ffn_width()}, {"d_emb", d_emb},     {"ln_eps", ln_eps},
         {"dropout", dropout}, {"max_rows", max_rows}};
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("model config: malformed JSON: ") + e.what());
  }
  if (j.contains("model")) j = j["model"];
  ModelConfig c;
  auto take = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j[key].get<std::remove_reference_t<decltype(field)>>();
  };
  take("d_c", c.d_c);
  take("d_s", c.d_s);
  take("d_model", c.d_model);
  take("heads", c.heads);
  take("layers", c.layers);
  take("d_ff", c.d_ff);
  take("d_emb", c.d_emb);
  take("ln_eps", c.ln_eps);
  take("dropout", c.dropout);
  take("max_rows", c.max_rows);
  c.validate();
  return c;
}

template <class T>
ModelParams<T> ModelParams<T>::zeros(const ModelConfig& cfg) {
  cfg.validate();
  const auto dc = static_cast<Eigen::Index>(cfg.d_c);
  const auto ds = static_cast<Eigen::Index>(cfg.d_s);
  const auto dm = static_cast<Eigen::Index>(cfg.d_model);
  const auto de = static_cast<Eigen::Index>(cfg.d_emb);
  ModelParams p;
  p.w_r = Mat<T>::Zero(dc, dm);
  p.b_r = Mat<T>::Zero(1, dm);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    EncoderLayerParams<T> layer{AttentionParams<T>::zeros(cfg.d_model, cfg.heads),
                                FfnParams<T>::zeros(cfg.d_model, cfg.ffn_width()),
                                Mat<T>::Zero(1, dm),
                                Mat<T>::Zero(1, dm),
                                Mat<T>::Zero(1, dm),
                                Mat<T>::Zero(1, dm)};
    p.layers.push_back(std::move(layer));
  }
  p.w_v = Mat<T>::Zero(dm, de);
  p.b_v = Mat<T>::Zero(1, de);
  p.w_s = Mat<T>::Zero(ds, de);
  p.b_s = Mat<T>::Zero(1, de);
  return p;
}

template <class T>
std::size_t ModelParams<T>::parameter_count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Mat<T>& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

template <class T>
void ModelParams<T>::set_zero() {
  for_each([](const std::string&, Mat<T>& m) { m.setZero(); });
}

template <class T>
template <class U>
ModelParams<U> ModelParams<T>::cast() const {
  ModelParams<U> out;
  out.w_r = w_r.template cast<U>();
  out.b_r = b_r.template cast<U>();
  for (const auto& layer : layers) {
    EncoderLayerParams<U> l;
    for (std::size_t h = 0; h < layer.attn.heads(); ++h) {
      l.attn.wq.push_back(layer.attn.wq[h].template cast<U>());
      l.attn.wk.push_back(layer.attn.wk[h].template cast<U>());
      l.attn.wv.push_back(layer.attn.wv[h].template cast<U>());
    }
    l.attn.wo = layer.attn.wo.template cast<U>();
    l.ffn = FfnParams<U>{layer.ffn.w1.template cast<U>(), layer.ffn.b1.template cast<U>(),
                         layer.ffn.w2.template cast<U>(), layer.ffn.b2.template cast<U>()};
    l.ln1_gain = layer.ln1_gain.template cast<U>();
    l.ln1_bias = layer.ln1_bias.template cast<U>();
    l.ln2_gain = layer.ln2_gain.template cast<U>();
    l.ln2_bias = layer.ln2_bias.template cast<U>();
    out.layers.push_back(std::move(l));
  }
  out.w_v = w_v.template cast<U>();
  out.b_v = b_v.template cast<U>();
  out.w_s = w_s.template cast<U>();
  out.b_s = b_s.template cast<U>();
  return out;
}

template struct ModelParams<float>;
template struct ModelParams<double>;
template ModelParams<double> ModelParams<float>::cast<double>() const;
template ModelParams<float> ModelParams<double>::cast<float>() const;
template ModelParams<float> ModelParams<float>::cast<float>() const;
template ModelParams<double> ModelParams<double>::cast<double>() const;

ModelParams<float> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams<float> p = ModelParams<float>::zeros(cfg);
  Rng rng(derive_seed(seed, hash_string("init")));
  p.for_each([&](const std::string& name, Matrix& m) {
    if (name.find(".gain") != std::string::npos) {
      m.setOnes();
      return;
    }
    if (m.rows() == 1) return;  // biases stay zero
    const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      m.data()[i] = static_cast<float>(rng.uniform(-limit, limit));
    }
  });
  return p;
}

std::map<std::string, std::pair<long, long>> expected_shapes(const ModelConfig& cfg) {
  std::map<std::string, std::pair<long, long>> shapes;
  ModelParams<float>::zeros(cfg).for_each(
      [&](const std::string& name, const Matrix& m) { shapes[name] = {m.rows(), m.cols()}; });
  return shapes;
}

Checkpoint to_checkpoint(const ModelParams<float>& p, std::string config_echo) {
  Checkpoint ck;
  ck.config_echo = std::move(config_echo);
  p.for_each([&](const std::string& name, const Matrix& m) { ck.tensors.emplace(name, m); });
  return ck;
}

ModelParams<float> from_checkpoint(const Checkpoint& ckpt, const ModelConfig& cfg) {
  if (ckpt.tensors.empty()) throw ValidationError("checkpoint: no parameters");
  ModelParams<float> p = ModelParams<float>::zeros(cfg);
  std::size_t matched = 0;
  p.for_each([&](const std::string& name, Matrix& m) {
    auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end()) throw ValidationError("checkpoint: missing tensor " + name);
    if (it->second.rows() != m.rows() || it->second.cols() != m.cols()) {
      throw ValidationError("checkpoint: tensor " + name + " is " + std::to_string(it->second.rows()) + "x" +
                            std::to_string(it->second.cols()) + ", architecture expects " +
                            std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
    m = it->second;
    ++matched;
  });
  if (matched != ckpt.tensors.size()) throw ValidationError("checkpoint: unexpected extra tensors");
  return p;
}

namespace {

template <class T>
Mat<T> dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  Mat<T> m(rows, cols);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform01() < rate ? T(0) : keep_scale;
  return m;
}

}  // namespace

template <class T>
Mat<T> vem_forward(const Mat<T>& stack, const ModelParams<T>& p, const ModelConfig& cfg, const Mask& mask,
                   VemCache<T>* cache, Rng* dropout_rng) {
  if (stack.rows() < 1) throw ValidationError("vem_forward: empty segment");
  if (stack.cols() != p.w_r.rows()) {
    throw ValidationError("vem_forward: stack has " + std::to_string(stack.cols()) + " columns, model expects d_c=" +
                          std::to_string(p.w_r.rows()));
  }
  if (mask.size() != static_cast<std::size_t>(stack.rows())) {
    throw ValidationError("vem_forward: mask length does not match stack rows");
  }
  if (mask.count_valid() == 0) throw ValidationError("vem_forward: all rows masked");
  const bool use_dropout = cfg.dropout > 0.0 && dropout_rng != nullptr;
  const T eps = static_cast<T>(cfg.ln_eps);

  Mat<T> reduce_pre = affine(stack, p.w_r, p.b_r);
  Mat<T> x = relu(reduce_pre) +
             positional_encoding<T>(static_cast<std::size_t>(stack.rows()), static_cast<std::size_t>(p.w_r.cols()));

  if (cache) {
    cache->stack = stack;
    cache->reduce_pre = reduce_pre;
    cache->mask = mask;
    cache->layers.assign(p.layers.size(), {});
  }
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& lp = p.layers[l];
    typename VemCache<T>::Layer* lc = cache ? &cache->layers[l] : nullptr;
    Mat<T> attn = multi_head_attention(x, lp.attn, mask, lc ? &lc->mha : nullptr);
    if (use_dropout) {
      Mat<T> dm = dropout_mask<T>(attn.rows(), attn.cols(), cfg.dropout, *dropout_rng);
      attn = attn.cwiseProduct(dm);
      if (lc) lc->attn_drop = std::move(dm);
    }
    Mat<T> h1 = layer_norm(Mat<T>(x + attn), lp.ln1_gain, lp.ln1_bias, eps, lc ? &lc->ln1 : nullptr);
    Mat<T> f = ffn(h1, lp.ffn, lc ? &lc->ffn : nullptr);
    if (use_dropout) {
      Mat<T> dm = dropout_mask<T>(f.rows(), f.cols(), cfg.dropout, *dropout_rng);
      f = f.cwiseProduct(dm);
      if (lc) lc->ffn_drop = std::move(dm);
    }
    Mat<T> out = layer_norm(Mat<T>(h1 + f), lp.ln2_gain, lp.ln2_bias, eps, lc ? &lc->ln2 : nullptr);
    if (lc) {
      lc->input = std::move(x);
      lc->h1 = std::move(h1);
    }
    x = std::move(out);
  }
  Mat<T> pooled = masked_mean_pool(x, mask);
  Mat<T> proj_pre = affine(pooled, p.w_v, p.b_v);
  Mat<T> emb = relu(proj_pre);
  if (cache) {
    cache->encoded = std::move(x);
    cache->pooled = std::move(pooled);
    cache->proj_pre = std::move(proj_pre);
  }
  return emb;
}

template <class T>
void vem_backward(const VemCache<T>& cache, const ModelParams<T>& p, const ModelConfig& cfg, const Mat<T>& dout,
                  ModelParams<T>& grads) {
  (void)cfg;
  const Mat<T> dproj = relu_backward(cache.proj_pre, dout);
  const Mat<T> dpooled = affine_backward(cache.pooled, p.w_v, dproj, grads.w_v, grads.b_v);
  Mat<T> dx = masked_mean_pool_backward(dpooled, cache.mask, cache.encoded.rows());

  for (std::size_t li = p.layers.size(); li-- > 0;) {
    const auto& lp = p.layers[li];
    auto& lg = grads.layers[li];
    const auto& lc = cache.layers[li];
    const Mat<T> dr2 = layer_norm_backward(lc.ln2, lp.ln2_gain, dx, lg.ln2_gain, lg.ln2_bias);
    const Mat<T> df = lc.ffn_drop.size() ? Mat<T>(dr2.cwiseProduct(lc.ffn_drop)) : dr2;
    const Mat<T> dh1 = dr2 + ffn_backward(lc.h1, lp.ffn, lc.ffn, df, lg.ffn);
    const Mat<T> dr1 = layer_norm_backward(lc.ln1, lp.ln1_gain, dh1, lg.ln1_gain, lg.ln1_bias);
    const Mat<T> da = lc.attn_drop.size() ? Mat<T>(dr1.cwiseProduct(lc.attn_drop)) : dr1;
    dx = dr1 + multi_head_attention_backward(lc.input, lp.attn, lc.mha, da, lg.attn);
  }
  // Positional encoding is constant; the gradient flows through ReLU into W_r.
  const Mat<T> dreduce = relu_backward(cache.reduce_pre, dx);
  grads.w_r.noalias() += cache.stack.transpose() * dreduce;
  grads.b_r += dreduce.colwise().sum();
}

template <class T>
Mat<T> sem_forward(const Mat<T>& s, const ModelParams<T>& p, Mat<T>* pre) {
  if (s.rows() != 1 || s.cols() != p.w_s.rows()) {
    throw ValidationError("sem_forward: sentence vector has length " + std::to_string(s.size()) +
                          ", model expects d_s=" + std::to_string(p.w_s.rows()));
  }
  Mat<T> z = affine(s, p.w_s, p.b_s);
  Mat<T> out = relu(z);
  if (pre) *pre = std::move(z);
  return out;
}

template <class T>
void sem_backward(const Mat<T>& s, const Mat<T>& pre, const Mat<T>& dout, ModelParams<T>& grads) {
  const Mat<T> dz = relu_backward(pre, dout);
  grads.w_s.noalias() += s.transpose() * dz;
  grads.b_s += dz;
}

template Mat<float> vem_forward(const Mat<float>&, const ModelParams<float>&, const ModelConfig&, const Mask&,
                                VemCache<float>*, Rng*);
template Mat<double> vem_forward(const Mat<double>&, const ModelParams<double>&, const ModelConfig&, const Mask&,
                                 VemCache<double>*, Rng*);
template void vem_backward(const VemCache<float>&, const ModelParams<float>&, const ModelConfig&,
                           const Mat<float>&, ModelParams<float>&);
template void vem_backward(const VemCache<double>&, const ModelParams<double>&, const ModelConfig&,
                           const Mat<double>&, ModelParams<double>&);
template Mat<float> sem_forward(const Mat<float>&, const ModelParams<float>&, Mat<float>*);
template Mat<double> sem_forward(const Mat<double>&, const ModelParams<double>&, Mat<double>*);
template void sem_backward(const Mat<float>&, const Mat<float>&, const Mat<float>&, ModelParams<float>&);
template void sem_backward(const Mat<double>&, const Mat<double>&, const Mat<double>&, ModelParams<double>&);

Matrix select_rows(const Matrix& features, std::size_t first, std::size_t count, std::size_t max_rows,
                   Rng* train_rng) {
  if (count == 0) throw ValidationError("select_rows: empty segment");
  if (first + count > static_cast<std::size_t>(features.rows())) {
    throw ValidationError("select_rows: window exceeds feature stack");
  }
  std::size_t take = count;
  if (count > max_rows) {
    const std::size_t slack = count - max_rows;
    const std::size_t offset = train_rng ? static_cast<std::size_t>(train_rng->uniform_index(slack + 1)) : slack / 2;
    first += offset;
    take = max_rows;
  }
  return features.middleRows(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(take));
}

std::vector<Matrix> embed_batch(const std::vector<Matrix>& stacks, const ModelParams<float>& p,
                                const ModelConfig& cfg) {
  if (stacks.empty()) throw ValidationError("embed_batch: empty batch");
  Eigen::Index max_len = 0;
  for (const auto& s : stacks) max_len = std::max(max_len, s.rows());
  std::vector<Matrix> out;
  out.reserve(stacks.size());
  for (std::size_t i = 0; i < stacks.size(); ++i) {
    const Matrix& s = stacks[i];
    try {
      if (s.rows() < 1) throw ValidationError("empty segment");
      Matrix padded = Matrix::Zero(max_len, s.cols());
      padded.topRows(s.rows()) = s;
      const Mask mask = Mask::prefix(static_cast<std::size_t>(s.rows()), static_cast<std::size_t>(max_len));
      out.push_back(vem_forward(padded, p, cfg, mask));
    } catch (const ValidationError& e) {
      throw ValidationError("embed_batch item " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace vtalign
