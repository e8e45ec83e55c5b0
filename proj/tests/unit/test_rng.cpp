// Copyright 2026 The vtalign Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "vtalign/rng.hpp"

using namespace vtalign;

// Published reference values: the first splitmix64 output from state 0 and
// the FNV-1a test vectors.
TEST(Rng, MixAndHashMatchPublishedVectors) {
  EXPECT_EQ(mix64(0), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(hash_string(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(hash_string("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(hash_string("foobar"), 0x85944171f73967e8ULL);
}

TEST(Rng, EngineIsStandardMt19937_64) {
  // The standard fixes the 10000th output of a default-constructed engine.
  std::mt19937_64 ref;
  ref.discard(9999);
  EXPECT_EQ(ref(), 9981545732273789042ULL);

  Rng rng(7);
  std::mt19937_64 same(mix64(7));
  for (int i = 0; i < 100; ++i) EXPECT_EQ(rng.next_u64(), same());
}

TEST(Rng, DeriveSeedIsOrderSensitive) {
  EXPECT_NE(derive_seed(1, 2, 3), derive_seed(1, 3, 2));
  EXPECT_EQ(derive_seed(1, 2, 3), derive_seed(derive_seed(1, 2), 3));
  EXPECT_NE(derive_seed(1, 2), derive_seed(2, 2));
}

TEST(Rng, UniformIndexRangeAndCoverage) {
  Rng rng(3);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const auto k = rng.uniform_index(7);
    ASSERT_LT(k, 7u);
    ++counts[k];
  }
  // Binomial(7000, 1/7): sd ~ 29; 6 sd is a generous bound.
  for (int c : counts) EXPECT_NEAR(c, 1000, 180);
  EXPECT_EQ(rng.uniform_index(1), 0u);
}

TEST(Rng, Uniform01AndNormalMoments) {
  Rng rng(11);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform01();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    const double z = rng.normal(2.0, 3.0);
    sum += z;
    sq += (z - 2.0) * (z - 2.0);
  }
  EXPECT_NEAR(sum / n, 2.0, 0.1);
  EXPECT_NEAR(std::sqrt(sq / n), 3.0, 0.1);
}

TEST(Rng, SampleWithoutReplacement) {
  std::vector<int> items(50);
  std::iota(items.begin(), items.end(), 0);
  Rng a(5), b(5);
  const auto s1 = sample_without_replacement(items, 10, a);
  const auto s2 = sample_without_replacement(items, 10, b);
  EXPECT_EQ(s1, s2);
  EXPECT_EQ(std::set<int>(s1.begin(), s1.end()).size(), 10u);

  Rng c(5);
  auto all = sample_without_replacement(items, 100, c);
  std::sort(all.begin(), all.end());
  EXPECT_EQ(all, items);
}

TEST(Rng, ShuffleIsPermutation) {
  std::vector<int> v(30);
  std::iota(v.begin(), v.end(), 0);
  auto w = v;
  Rng rng(9);
  shuffle(w, rng);
  EXPECT_NE(w, v);
  std::sort(w.begin(), w.end());
  EXPECT_EQ(w, v);
}
