// Copyright 2026 The vtalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vtalign/dataio.hpp"

namespace vtalign {

/// Synthetic dataset with G separable classes. Class centers c_g are unit
/// vectors in R^d_s; a description sentence is |c_g + N(0, sigma_s)|, the
/// class prototype sentence is |c_g|, and each video is t in [t_min, t_max]
/// rows of A c_g + N(0, sigma_v) for a fixed random A (d_c x d_s).
struct SynthConfig {
  std::size_t classes = 10;
  std::size_t per_class = 30;
  std::size_t eval_classes = 3;
  std::size_t d_c = 64;
  std::size_t d_s = 6;
  double sigma_v = 0.05;
  double sigma_s = 0.05;
  std::size_t t_min = 3;
  std::size_t t_max = 10;
  bool half_normal_centers = true;  // draw |N(0,1)| instead of N(0,1) before normalizing
  bool object_sentences = true;     // each segment lists its class prototype sentence
  std::uint64_t seed = 0;

  void validate() const;
  std::string to_json() const;
};

struct SynthOutput {
  std::filesystem::path all_manifest;    // every video, every class
  std::filesystem::path train_manifest;  // training classes only
  std::filesystem::path eval_manifest;   // held-out classes only
  std::vector<std::string> train_classes;
  std::vector<std::string> eval_classes;
};

/// Writes sentences.fvec, features/<video>.fvec, all.json, train.json,
/// eval.json and synth_config.json under `out_dir`. Same config, same bytes.
SynthOutput synth_generate(const SynthConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace vtalign
