// Copyright 2026 The vtalign Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "vtalign/embedder.hpp"
#include "vtalign/miner.hpp"
#include "vtalign/trainer.hpp"

using namespace vtalign;

namespace {

Matrix uniform(Eigen::Index r, Eigen::Index c, Rng& rng, float lo, float hi) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = lo + (hi - lo) * static_cast<float>(rng.uniform01());
  return m;
}

ModelConfig paper_config() {
  ModelConfig cfg;
  cfg.d_c = 2048;
  cfg.d_s = 768;
  return cfg;
}

}  // namespace

// One window through the visual encoder at default width; arg = rows.
static void BM_VemForward(benchmark::State& state) {
  const ModelConfig cfg = paper_config();
  const ModelParams<float> p = init_params(cfg, 1);
  Rng rng(2);
  const Matrix stack = uniform(state.range(0), static_cast<Eigen::Index>(cfg.d_c), rng, 0.0f, 1.0f);
  for (auto _ : state) benchmark::DoNotOptimize(vem_forward(stack, p, cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_VemForward)->Arg(10)->Arg(60)->Arg(480)->Unit(benchmark::kMillisecond);

// Forward plus backward for one window.
static void BM_VemForwardBackward(benchmark::State& state) {
  const ModelConfig cfg = paper_config();
  const ModelParams<float> p = init_params(cfg, 1);
  ModelParams<float> grads = ModelParams<float>::zeros(cfg);
  Rng rng(3);
  const Matrix stack = uniform(state.range(0), static_cast<Eigen::Index>(cfg.d_c), rng, 0.0f, 1.0f);
  const Mask mask = Mask::all_valid(static_cast<std::size_t>(stack.rows()));
  const Matrix dout = Matrix::Constant(1, static_cast<Eigen::Index>(cfg.d_emb), 1.0f);
  for (auto _ : state) {
    VemCache<float> cache;
    benchmark::DoNotOptimize(vem_forward(stack, p, cfg, mask, &cache));
    vem_backward(cache, p, cfg, dout, grads);
  }
}
BENCHMARK(BM_VemForwardBackward)->Arg(10)->Arg(60)->Unit(benchmark::kMillisecond);

// Negative-pool scan over a corpus of arg sentences (d_s = 768).
static void BM_MineNegatives(benchmark::State& state) {
  Rng rng(4);
  const Matrix table = uniform(state.range(0), 768, rng, 0.0f, 1.0f);
  const SentenceCorpus corpus(table);
  MinerConfig cfg;
  cfg.tau = 0.9;
  std::uint32_t anchor = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(mine_negatives(anchor, corpus, cfg));
    anchor = (anchor + 1) % static_cast<std::uint32_t>(state.range(0));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MineNegatives)->Arg(1000)->Arg(10000)->Unit(benchmark::kMicrosecond);

// One optimizer step over the full default-size parameter set.
static void BM_AdamwStep(benchmark::State& state) {
  const ModelConfig cfg = paper_config();
  ModelParams<float> p = init_params(cfg, 5);
  ModelParams<float> g = init_params(cfg, 6);
  OptimState st = OptimState::for_params(cfg);
  const TrainConfig tc;
  for (auto _ : state) adamw_step(p, g, st, tc);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(p.parameter_count()));
}
BENCHMARK(BM_AdamwStep)->Unit(benchmark::kMillisecond);

// libbenchmark_main.a on some distros ships LTO bytecode from another GCC.
BENCHMARK_MAIN();
