// Copyright 2026 The vtalign Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "test_support.hpp"
#include "vtalign/embedder.hpp"

using namespace vtalign;
namespace vt = vtalign::testing;
using Md = Mat<double>;

namespace {

// Layer norm written out per element.
Md loop_layer_norm(const Md& x, const Md& gain, const Md& bias, double eps) {
  Md y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double mean = 0.0, var = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) mean += x(r, c);
    mean /= static_cast<double>(x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) var += (x(r, c) - mean) * (x(r, c) - mean);
    var /= static_cast<double>(x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) y(r, c) = gain(0, c) * (x(r, c) - mean) / std::sqrt(var + eps) + bias(0, c);
  }
  return y;
}

Md relu_d(const Md& x) { return x.cwiseMax(0.0); }

// Single-position trace: with one row the attention weights are all 1, so
// each head returns its value projection of that row.
Md single_position_oracle(const Md& row, const ModelParams<double>& p, const ModelConfig& cfg) {
  Md x = relu_d(row * p.w_r + p.b_r);
  for (Eigen::Index c = 0; c < x.cols(); ++c) x(0, c) += (c % 2 == 0) ? 0.0 : 1.0;  // PE row 0
  for (const auto& l : p.layers) {
    Md concat(1, 0);
    for (const auto& wv : l.attn.wv) {
      Md next(1, concat.cols() + wv.cols());
      next << concat, x * wv;
      concat = next;
    }
    const Md h1 = loop_layer_norm(x + concat * l.attn.wo, l.ln1_gain, l.ln1_bias, cfg.ln_eps);
    const Md f = relu_d(h1 * l.ffn.w1 + l.ffn.b1) * l.ffn.w2 + l.ffn.b2;
    x = loop_layer_norm(h1 + f, l.ln2_gain, l.ln2_bias, cfg.ln_eps);
  }
  return relu_d(x * p.w_v + p.b_v);
}

ModelParams<float> random_params(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams<float> p = init_params(cfg, seed);
  Rng rng(seed + 100);
  // Non-zero biases so every term of the forward pass is exercised.
  p.for_each([&](const std::string& name, Matrix& m) {
    if (name.find("b_") != std::string::npos || name.find("bias") != std::string::npos) {
      m = vt::random_mat<float>(m.rows(), m.cols(), rng, 0.0, 0.5);
    }
  });
  return p;
}

}  // namespace

TEST(ModelConfig, DefaultsAndValidation) {
  ModelConfig cfg;
  EXPECT_EQ(cfg.d_c, 4096u);
  EXPECT_EQ(cfg.d_s, 768u);
  EXPECT_EQ(cfg.d_model, 512u);
  EXPECT_EQ(cfg.heads, 2u);
  EXPECT_EQ(cfg.layers, 1u);
  EXPECT_EQ(cfg.d_emb, 128u);
  EXPECT_EQ(cfg.ffn_width(), 2048u);
  EXPECT_EQ(cfg.max_rows, 480u);
  EXPECT_NO_THROW(cfg.validate());
  // The echo records the resolved FFN width.
  ModelConfig resolved = cfg;
  resolved.d_ff = cfg.ffn_width();
  EXPECT_EQ(ModelConfig::from_json(cfg.to_json()), resolved);

  ModelConfig bad = cfg;
  bad.heads = 3;
  EXPECT_THROW(bad.validate(), ValidationError);
  bad = cfg;
  bad.d_model = 7;
  bad.heads = 1;
  EXPECT_THROW(bad.validate(), ValidationError);  // odd width has no positional encoding
  bad = cfg;
  bad.d_emb = 0;
  EXPECT_THROW(bad.validate(), ValidationError);
  bad = cfg;
  bad.dropout = 1.0;
  EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(Params, ShapesNamesAndInit) {
  ModelConfig cfg = vt::toy_config();
  cfg.layers = 2;
  const ModelParams<float> p = init_params(cfg, 3);
  const auto shapes = expected_shapes(cfg);
  std::size_t count = 0, params = 0;
  p.for_each([&](const std::string& name, const Matrix& m) {
    ASSERT_TRUE(shapes.count(name)) << name;
    EXPECT_EQ(shapes.at(name), std::make_pair(static_cast<long>(m.rows()), static_cast<long>(m.cols()))) << name;
    ++count;
    params += static_cast<std::size_t>(m.size());
    if (name.rfind("b_", 0) == 0 || name.find(".b_") != std::string::npos || name.find("bias") != std::string::npos) {
      EXPECT_EQ(m.cwiseAbs().maxCoeff(), 0.0f) << name;
    } else if (name.find("gain") != std::string::npos) {
      EXPECT_EQ(m.minCoeff(), 1.0f) << name;
      EXPECT_EQ(m.maxCoeff(), 1.0f) << name;
    } else {
      const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
      EXPECT_LE(m.cwiseAbs().maxCoeff(), limit) << name;
      EXPECT_GT(m.cwiseAbs().maxCoeff(), 0.0f) << name;
    }
  });
  EXPECT_EQ(count, shapes.size());
  EXPECT_EQ(params, p.parameter_count());
  EXPECT_EQ(shapes.at("W_r"), std::make_pair(6L, 4L));
  EXPECT_EQ(shapes.at("enc1.attn.W_q.1"), std::make_pair(4L, 2L));
  EXPECT_EQ(shapes.at("W_s"), std::make_pair(5L, 3L));

  // Same seed, same parameters; a checkpoint round trip preserves them.
  const auto ckpt = to_checkpoint(p, cfg.to_json());
  const auto back = from_checkpoint(ckpt, cfg);
  EXPECT_TRUE(ckpt == to_checkpoint(back, cfg.to_json()));
  EXPECT_TRUE(ckpt == to_checkpoint(init_params(cfg, 3), cfg.to_json()));
  EXPECT_FALSE(ckpt == to_checkpoint(init_params(cfg, 4), cfg.to_json()));
}

TEST(Vem, OutputShapeAndNonNegativity) {
  ModelConfig cfg;
  cfg.d_c = 32;
  cfg.d_s = 16;
  cfg.d_model = 16;
  const ModelParams<float> p = random_params(cfg, 1);
  Rng rng(2);
  for (int t : {1, 2, 7}) {
    const Matrix out = vem_forward(vt::random_mat<float>(t, 32, rng), p, cfg);
    ASSERT_EQ(out.rows(), 1);
    ASSERT_EQ(out.cols(), 128);  // default d_emb
    EXPECT_GE(out.minCoeff(), 0.0f);
  }
}

TEST(Vem, SinglePositionOracle) {
  for (std::size_t layers : {1, 2}) {
    ModelConfig cfg = vt::toy_config();
    cfg.layers = layers;
    const ModelParams<double> p = random_params(cfg, 5).cast<double>();
    Rng rng(6);
    const Md row = vt::random_mat<double>(1, 6, rng);
    const Md got = vem_forward(row, p, cfg);
    const Md want = single_position_oracle(row, p, cfg);
    EXPECT_LT((got - want).cwiseAbs().maxCoeff(), 1e-12) << "layers " << layers;
  }
}

TEST(Vem, PaddingInvariance) {
  const ModelConfig cfg = vt::toy_config();
  const ModelParams<float> p = random_params(cfg, 7);
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto t = static_cast<Eigen::Index>(1 + rng.uniform_index(6));
    const auto pad = static_cast<Eigen::Index>(1 + rng.uniform_index(5));
    const Matrix stack = vt::random_mat<float>(t, 6, rng);
    Matrix padded = Matrix::Zero(t + pad, 6);
    padded.topRows(t) = stack;
    const Matrix a = vem_forward(stack, p, cfg);
    const Matrix b = vem_forward(padded, p, cfg,
                                 Mask::prefix(static_cast<std::size_t>(t), static_cast<std::size_t>(t + pad)));
    EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-5f);
    // The padding content itself is irrelevant.
    padded.bottomRows(pad).setRandom();
    const Matrix c = vem_forward(padded, p, cfg,
                                 Mask::prefix(static_cast<std::size_t>(t), static_cast<std::size_t>(t + pad)));
    EXPECT_LE((a - c).cwiseAbs().maxCoeff(), 1e-5f);
  }
}

TEST(Vem, Errors) {
  const ModelConfig cfg = vt::toy_config();
  const ModelParams<float> p = init_params(cfg, 1);
  EXPECT_THROW(vem_forward(Matrix(0, 6), p, cfg), ValidationError);
  EXPECT_THROW(vem_forward(Matrix(Matrix::Ones(2, 5)), p, cfg), ValidationError);
  EXPECT_THROW(vem_forward(Matrix(Matrix::Ones(2, 6)), p, cfg, Mask::prefix(0, 2)), ValidationError);
}

TEST(Vem, Deterministic) {
  const ModelConfig cfg = vt::toy_config();
  const ModelParams<float> p = random_params(cfg, 9);
  Rng rng(10);
  const Matrix s = vt::random_mat<float>(5, 6, rng);
  const Matrix a = vem_forward(s, p, cfg), b = vem_forward(s, p, cfg);
  EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<std::size_t>(a.size())), 0);
}

TEST(Sem, Examples) {
  ModelConfig cfg = vt::toy_config(6, 2, 4, 2, 2);
  ModelParams<float> p = ModelParams<float>::zeros(cfg);
  const Matrix s = (Matrix(1, 2) << 0.5f, 2.0f).finished();
  EXPECT_EQ(sem_forward(s, p).cwiseAbs().maxCoeff(), 0.0f);

  // W_s = [[1, -1], [2, 0.5]], b_s = [0.25, -3]:
  // z = [0.5 + 4 + 0.25, -0.5 + 1 - 3] = [4.75, -2.5] -> [4.75, 0].
  p.w_s << 1, -1, 2, 0.5;
  p.b_s << 0.25, -3;
  const Matrix out = sem_forward(s, p);
  EXPECT_FLOAT_EQ(out(0, 0), 4.75f);
  EXPECT_FLOAT_EQ(out(0, 1), 0.0f);

  EXPECT_THROW(sem_forward(Matrix(Matrix::Ones(1, 3)), p), ValidationError);

  ModelConfig full;
  const ModelParams<float> q = init_params(full, 2);
  Rng rng(3);
  const Matrix e = sem_forward(vt::random_mat<float>(1, 768, rng), q);
  EXPECT_EQ(e.cols(), 128);
  EXPECT_GE(e.minCoeff(), 0.0f);
}

TEST(JointSpace, CosineOfJointVectorsInUnitInterval) {
  const ModelConfig cfg = vt::toy_config();
  const ModelParams<float> p = random_params(cfg, 11);
  Rng rng(12);
  for (int i = 0; i < 50; ++i) {
    const Matrix v = vem_forward(vt::random_mat<float>(3, 6, rng), p, cfg);
    const Matrix s = sem_forward(vt::random_mat<float>(1, 5, rng), p);
    if (v.norm() == 0.0f || s.norm() == 0.0f) continue;
    const double c = cosine_sim<float>(row_span(v), row_span(s));
    EXPECT_GE(c, 0.0);
    EXPECT_LE(c, 1.0 + 1e-6);
  }
}

TEST(SelectRows, CropRules) {
  Matrix f(10, 1);
  for (int i = 0; i < 10; ++i) f(i, 0) = static_cast<float>(i);
  EXPECT_EQ(select_rows(f, 2, 3, 480)(0, 0), 2.0f);
  const Matrix centered = select_rows(f, 0, 10, 4);
  EXPECT_EQ(centered.rows(), 4);
  EXPECT_EQ(centered(0, 0), 3.0f);  // slack 6, offset 3
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    const Matrix r = select_rows(f, 0, 10, 4, &rng);
    EXPECT_EQ(r.rows(), 4);
    EXPECT_GE(r(0, 0), 0.0f);
    EXPECT_LE(r(0, 0), 6.0f);
  }
  EXPECT_THROW(select_rows(f, 0, 0, 4), ValidationError);
  EXPECT_THROW(select_rows(f, 8, 3, 4), ValidationError);
}

TEST(EmbedBatch, MatchesPerItemForward) {
  const ModelConfig cfg = vt::toy_config();
  const ModelParams<float> p = random_params(cfg, 13);
  Rng rng(14);
  std::vector<Matrix> stacks = {vt::random_mat<float>(2, 6, rng), vt::random_mat<float>(5, 6, rng),
                                vt::random_mat<float>(1, 6, rng)};
  const auto out = embed_batch(stacks, p, cfg);
  ASSERT_EQ(out.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_LE((out[i] - vem_forward(stacks[i], p, cfg)).cwiseAbs().maxCoeff(), 1e-5f) << i;
  }

  const auto single = embed_batch({stacks[1]}, p, cfg);
  EXPECT_LE((single[0] - vem_forward(stacks[1], p, cfg)).cwiseAbs().maxCoeff(), 1e-5f);

  // Shuffled batch, correspondingly shuffled outputs.
  const auto shuffled = embed_batch({stacks[2], stacks[0], stacks[1]}, p, cfg);
  EXPECT_LE((shuffled[0] - out[2]).cwiseAbs().maxCoeff(), 1e-5f);
  EXPECT_LE((shuffled[1] - out[0]).cwiseAbs().maxCoeff(), 1e-5f);
  EXPECT_LE((shuffled[2] - out[1]).cwiseAbs().maxCoeff(), 1e-5f);
}

TEST(EmbedBatch, ErrorsNameTheItem) {
  const ModelConfig cfg = vt::toy_config();
  const ModelParams<float> p = init_params(cfg, 1);
  EXPECT_THROW(embed_batch({}, p, cfg), ValidationError);
  try {
    embed_batch({Matrix::Ones(2, 6), Matrix::Ones(2, 4)}, p, cfg);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("item 1"), std::string::npos);
  }
}
