// Copyright 2026 The vtalign Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "test_support.hpp"
#include "vtalign/gradcheck.hpp"
#include "vtalign/netmath.hpp"

using namespace vtalign;
using vtalign::testing::random_mat;
using Md = Mat<double>;

namespace {

Md mat(std::initializer_list<std::initializer_list<double>> rows) {
  Md m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

Md zeros(Eigen::Index r, Eigen::Index c) { return Md::Zero(r, c); }
Md ones(Eigen::Index r, Eigen::Index c) { return Md::Ones(r, c); }
Md eye(Eigen::Index r, Eigen::Index c) { return Md::Identity(r, c); }

}  // namespace

TEST(Relu, Examples) {
  EXPECT_EQ(relu(mat({{-1, 0, 2}})), mat({{0, 0, 2}}));
  EXPECT_EQ(relu(mat({{-3, -0.5, -1e-9}})), mat({{0, 0, 0}}));
  Rng rng(1);
  const Md x = random_mat<double>(4, 5, rng);
  EXPECT_EQ(relu(relu(x)), relu(x));
}

TEST(Affine, Examples) {
  const Md x = mat({{1, 2}, {-4, 7}});
  EXPECT_EQ(affine(x, zeros(2, 2), mat({{3, 3}})), mat({{3, 3}, {3, 3}}));
  EXPECT_EQ(affine(x, eye(2, 2), zeros(1, 2)), x);
  EXPECT_EQ(affine(mat({{1, 2}}), mat({{1, 0}, {0, 2}}), mat({{1, 1}})), mat({{2, 5}}));
}

TEST(Affine, ShapeMismatchThrows) {
  EXPECT_THROW(affine(zeros(1, 3), zeros(2, 2), zeros(1, 2)), ValidationError);
  EXPECT_THROW(affine(zeros(1, 2), zeros(2, 2), zeros(1, 3)), ValidationError);
}

TEST(Softmax, Examples) {
  const Md a = softmax_rows(mat({{0, 0}}));
  EXPECT_DOUBLE_EQ(a(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(a(0, 1), 0.5);
  const Md b = softmax_rows(mat({{1000, 1000}}));
  EXPECT_DOUBLE_EQ(b(0, 0), 0.5);
  EXPECT_TRUE(b.allFinite());
  const Md c = softmax_rows(mat({{0, std::log(3.0)}}));
  EXPECT_NEAR(c(0, 0), 0.25, 1e-15);
  EXPECT_NEAR(c(0, 1), 0.75, 1e-15);
}

TEST(Softmax, RowsSumToOneAndPreserveOrder) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix x = random_mat<float>(3, 7, rng, -30.0, 30.0);
    const Matrix y = softmax_rows(x);
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      EXPECT_NEAR(y.row(r).sum(), 1.0f, 1e-6f);
      for (Eigen::Index i = 0; i < y.cols(); ++i) {
        for (Eigen::Index j = 0; j < y.cols(); ++j) {
          if (x(r, i) < x(r, j)) EXPECT_LE(y(r, i), y(r, j));
        }
      }
    }
  }
}

TEST(Softmax, MaskedColumnsGetExactlyZero) {
  const Mask mask(std::vector<bool>{true, false, true, false});
  const Md y = masked_softmax_rows(mat({{1, 50, 2, -3}, {0, 0, 0, 0}}), mask);
  EXPECT_EQ(y(0, 1), 0.0);
  EXPECT_EQ(y(0, 3), 0.0);
  EXPECT_EQ(y(1, 1), 0.0);
  EXPECT_NEAR(y.row(0).sum(), 1.0, 1e-15);
  EXPECT_THROW(masked_softmax_rows(mat({{1, 2}}), Mask(std::vector<bool>{false, false})), ValidationError);
}

TEST(PositionalEncoding, Examples) {
  const Md pe = positional_encoding<double>(6, 8);
  for (Eigen::Index i = 0; i < 4; ++i) {
    EXPECT_EQ(pe(0, 2 * i), 0.0);
    EXPECT_EQ(pe(0, 2 * i + 1), 1.0);
  }
  EXPECT_LE(pe.maxCoeff(), 1.0);
  EXPECT_GE(pe.minCoeff(), -1.0);
  EXPECT_NEAR(pe(1, 0), 0.8414709848078965, 1e-15);
  EXPECT_THROW(positional_encoding<double>(3, 5), ValidationError);
}

TEST(PositionalEncoding, MatchesFormula) {
  const std::size_t d = 10;
  const Md pe = positional_encoding<double>(7, d);
  for (Eigen::Index pos = 0; pos < 7; ++pos) {
    for (std::size_t i = 0; i < d / 2; ++i) {
      const double angle = static_cast<double>(pos) / std::pow(10000.0, 2.0 * static_cast<double>(i) / d);
      EXPECT_NEAR(pe(pos, static_cast<Eigen::Index>(2 * i)), std::sin(angle), 1e-12);
      EXPECT_NEAR(pe(pos, static_cast<Eigen::Index>(2 * i + 1)), std::cos(angle), 1e-12);
    }
  }
}

TEST(Attention, Examples) {
  const Md v1 = mat({{0.3, -2.0, 5.0}});
  EXPECT_TRUE(scaled_dot_attention(mat({{1, 2}}), mat({{-1, 4}}), v1, Mask::all_valid(1)).isApprox(v1, 1e-15));

  const Md v2 = mat({{1, 2}, {3, 8}});
  const Md out2 = scaled_dot_attention(mat({{0, 1}}), mat({{1, 0}, {-2, 0}}), v2, Mask::all_valid(2));
  EXPECT_NEAR(out2(0, 0), 2.0, 1e-15);
  EXPECT_NEAR(out2(0, 1), 5.0, 1e-15);

  Md w;
  const Md out3 = scaled_dot_attention(mat({{1, 0}}), mat({{1, 0}, {0, 1}}), mat({{1, 0}, {0, 1}}), Mask::all_valid(2), &w);
  const double e = std::exp(1.0 / std::sqrt(2.0));
  EXPECT_NEAR(w(0, 0), e / (e + 1.0), 1e-15);
  EXPECT_NEAR(out3(0, 0), 0.66976, 5e-6);
  EXPECT_NEAR(out3(0, 1), 0.33024, 5e-6);
}

TEST(Attention, MatchesLoopOracleWithMask) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t tk = 1 + rng.uniform_index(5);
    std::vector<bool> valid(tk);
    for (std::size_t i = 0; i < tk; ++i) valid[i] = rng.uniform01() < 0.6;
    valid[rng.uniform_index(tk)] = true;
    const Md q = random_mat<double>(3, 4, rng), k = random_mat<double>(static_cast<Eigen::Index>(tk), 4, rng);
    const Md v = random_mat<double>(static_cast<Eigen::Index>(tk), 2, rng);
    Md w;
    const Md got = scaled_dot_attention(q, k, v, Mask(valid), &w);
    EXPECT_LT((got - vtalign::testing::naive_attention(q, k, v, valid)).cwiseAbs().maxCoeff(), 1e-12);
    for (std::size_t j = 0; j < tk; ++j) {
      if (!valid[j]) EXPECT_EQ(w.col(static_cast<Eigen::Index>(j)).cwiseAbs().maxCoeff(), 0.0);
    }
  }
}

TEST(MultiHeadAttention, SingleIdentityHeadReducesToAttention) {
  Rng rng(4);
  AttentionParams<double> p = AttentionParams<double>::zeros(4, 1);
  p.wq[0] = p.wk[0] = p.wv[0] = eye(4, 4);
  p.wo = eye(4, 4);
  const Md x = random_mat<double>(3, 4, rng);
  const Md a = multi_head_attention(x, p, Mask::all_valid(3));
  EXPECT_LT((a - scaled_dot_attention(x, x, x, Mask::all_valid(3))).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(MultiHeadAttention, MatchesLoopOracleAndKeepsShape) {
  Rng rng(5);
  AttentionParams<double> p = AttentionParams<double>::zeros(4, 2);
  for (auto* group : {&p.wq, &p.wk, &p.wv}) {
    for (auto& m : *group) m = random_mat<double>(4, 2, rng);
  }
  p.wo = random_mat<double>(4, 4, rng);
  const Md x = random_mat<double>(3, 4, rng);
  const std::vector<bool> valid{true, false, true};
  const Md got = multi_head_attention(x, p, Mask(valid));
  EXPECT_EQ(got.rows(), 3);
  EXPECT_EQ(got.cols(), 4);
  EXPECT_LT((got - vtalign::testing::naive_mha(x, p, valid)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(AttentionParams<double>::zeros(5, 2), ValidationError);
}

TEST(Ffn, Examples) {
  Rng rng(6);
  FfnParams<double> p = FfnParams<double>::zeros(2, 3);
  p.b2 = mat({{0.5, -1.5}});
  const Md x = random_mat<double>(4, 2, rng);
  const Md y = ffn(x, p);
  for (Eigen::Index r = 0; r < 4; ++r) EXPECT_EQ(y.row(r), p.b2);

  // x=[1,2], W1=[[1,-1],[1,1]], b1=[0,-2] -> pre [3,-1] -> hidden [3,0]
  // W2=[[2,0],[5,7]], b2=[1,1] -> [7,1]
  FfnParams<double> q{mat({{1, -1}, {1, 1}}), mat({{0, -2}}), mat({{2, 0}, {5, 7}}), mat({{1, 1}})};
  EXPECT_EQ(ffn(mat({{1, 2}}), q), mat({{7, 1}}));
}

TEST(Ffn, RowPermutationEquivariance) {
  Rng rng(7);
  FfnParams<double> p{random_mat<double>(3, 5, rng), random_mat<double>(1, 5, rng), random_mat<double>(5, 3, rng),
                      random_mat<double>(1, 3, rng)};
  const Md x = random_mat<double>(4, 3, rng);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(4);
  perm.indices() << 2, 0, 3, 1;
  const Md px = perm * x;
  EXPECT_LT((ffn(px, p) - perm * ffn(x, p)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(LayerNorm, Examples) {
  const Md one = ones(1, 3), zero = zeros(1, 3);
  EXPECT_EQ(layer_norm(mat({{4, 4, 4}}), one, zero, 1e-5), mat({{0, 0, 0}}));
  Rng rng(8);
  const Md bias = random_mat<double>(1, 3, rng);
  const Md y = layer_norm(random_mat<double>(2, 3, rng), one, bias, 1e-5);
  for (Eigen::Index r = 0; r < 2; ++r) EXPECT_NEAR(y.row(r).mean(), bias.mean(), 1e-12);
  const Md z = layer_norm(mat({{1, 3}}), ones(1, 2), zeros(1, 2), 1e-12);
  EXPECT_NEAR(z(0, 0), -1.0, 1e-9);
  EXPECT_NEAR(z(0, 1), 1.0, 1e-9);
}

TEST(Pooling, Examples) {
  EXPECT_EQ(masked_mean_pool(mat({{1, 2}, {9, 9}}), Mask(std::vector<bool>{true, false})), mat({{1, 2}}));
  EXPECT_EQ(masked_mean_pool(mat({{5, 6}, {5, 6}}), Mask::all_valid(2)), mat({{5, 6}}));
  EXPECT_EQ(masked_mean_pool(mat({{1, 1}, {3, 3}}), Mask::all_valid(2)), mat({{2, 2}}));
  EXPECT_THROW(masked_mean_pool(mat({{1, 1}}), Mask(std::vector<bool>{false})), ValidationError);
}

TEST(CosineAndDistance, Examples) {
  const std::vector<double> x{0.3, -1.2, 4.0}, e1{1, 0}, e2{0, 1}, d{1, 1};
  EXPECT_NEAR(cosine_sim<double>(x, x), 1.0, 1e-15);
  EXPECT_EQ(cosine_sim<double>(e1, e2), 0.0);
  EXPECT_NEAR(cosine_sim<double>(d, e1), 1.0 / std::sqrt(2.0), 1e-15);
  const std::vector<double> zero{0, 0};
  EXPECT_THROW(cosine_sim<double>(zero, e1), ValidationError);

  EXPECT_EQ(l2_dist<double>(x, x), 0.0);
  const std::vector<double> o{0, 0}, p{3, 4};
  EXPECT_EQ(l2_dist<double>(o, p), 5.0);
  EXPECT_THROW(l2_dist<double>(x, o), ValidationError);
}

TEST(CosineAndDistance, MetricProperties) {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const Md a = random_mat<double>(1, 4, rng), b = random_mat<double>(1, 4, rng), c = random_mat<double>(1, 4, rng);
    const double ab = l2_dist(row_span(a), row_span(b)), bc = l2_dist(row_span(b), row_span(c));
    const double ac = l2_dist(row_span(a), row_span(c));
    EXPECT_LE(ac, ab + bc + 1e-12);
    EXPECT_EQ(ab, l2_dist(row_span(b), row_span(a)));
    const double cs = cosine_sim(row_span(a), row_span(b));
    EXPECT_LE(std::abs(cs), 1.0);
  }
}

TEST(FiniteDiff, Examples) {
  const std::vector<double> x{1.0, 2.0};
  const auto g = finite_diff_grad([](std::span<const double> v) { return v[0] * v[0] + v[1] * v[1]; }, x);
  EXPECT_NEAR(g[0], 2.0, 1e-9);
  EXPECT_NEAR(g[1], 4.0, 1e-9);
  const auto z = finite_diff_grad([](std::span<const double>) { return 7.0; }, x);
  EXPECT_EQ(z[0], 0.0);
  EXPECT_EQ(z[1], 0.0);
  EXPECT_THROW(finite_diff_grad([](std::span<const double>) { return std::nan(""); }, x), NumericError);
}

TEST(Kernels, Deterministic) {
  Rng rng(10);
  AttentionParams<float> p = AttentionParams<float>::zeros(4, 2);
  for (auto* group : {&p.wq, &p.wk, &p.wv}) {
    for (auto& m : *group) m = random_mat<float>(4, 2, rng);
  }
  p.wo = random_mat<float>(4, 4, rng);
  const Matrix x = random_mat<float>(5, 4, rng);
  const Matrix a = multi_head_attention(x, p, Mask::all_valid(5));
  const Matrix b = multi_head_attention(x, p, Mask::all_valid(5));
  EXPECT_EQ(0, std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<std::size_t>(a.size())));
}

// Kernel-level and composed gradients on several random toy shapes; the
// acceptance suite runs the full set of configurations.
TEST(Gradients, MatchCentralDifferences) {
  for (std::uint64_t seed = 100; seed < 105; ++seed) {
    for (const auto& c : vtalign::testing::gradient_suite_case(seed)) {
      EXPECT_LT(c.rel_err, 1e-4) << "seed " << seed << " " << c.what;
    }
  }
}
