// Copyright 2026 The vtalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vtalign/dataio.hpp"
#include "vtalign/rng.hpp"
#include "vtalign/tensor.hpp"

namespace vtalign {

struct MinerConfig {
  double tau = 0.8;
  std::size_t n_negatives = 10;
  std::size_t n_aug_segments = 3;
  double max_window_s = 10.0;
  std::uint64_t seed = 0;
  bool object_filter = true;
  std::size_t threads = 1;

  void validate() const;
  std::string to_json() const;
};

/// A sentence table plus the ids eligible as negatives. Row norms are
/// precomputed once; the table must outlive the corpus.
class SentenceCorpus {
 public:
  /// Every row of `table` is a candidate.
  explicit SentenceCorpus(const Matrix& table);
  /// Only `candidate_ids` are candidates (sorted and de-duplicated here).
  SentenceCorpus(const Matrix& table, std::vector<std::uint32_t> candidate_ids);

  const Matrix& table() const { return *table_; }
  std::span<const std::uint32_t> candidates() const { return candidates_; }
  std::size_t size() const { return static_cast<std::size_t>(table_->rows()); }

  /// Cosine similarity of two rows. Throws ValidationError on a zero row.
  double similarity(std::uint32_t a, std::uint32_t b) const;

 private:
  const Matrix* table_;
  std::vector<std::uint32_t> candidates_;
  std::vector<double> norms_;
};

/// True iff cosine_sim(a, b) > 1 - tau. A sentence is a valid negative for
/// an anchor exactly when this is false.
bool is_similar(std::span<const float> a, std::span<const float> b, double tau);

/// Candidates that are dissimilar to every id in `positives` (and are not
/// one of them), in ascending id order.
std::vector<std::uint32_t> negative_pool(std::span<const std::uint32_t> positives, const SentenceCorpus& corpus,
                                         double tau);

struct NegativeDraw {
  std::vector<std::uint32_t> ids;  // at most n, in draw order
  std::size_t pool_size = 0;
};

/// Up to cfg.n_negatives ids drawn uniformly without replacement from the
/// anchor's negative pool. The draw is seeded by (cfg.seed, anchor_id, salt),
/// so it does not depend on where the anchor sits in storage.
NegativeDraw mine_negatives(std::uint32_t anchor_id, const SentenceCorpus& corpus, const MinerConfig& cfg,
                            std::uint64_t salt = 0);

/// As mine_negatives, but a candidate must be dissimilar to the anchor AND
/// to each object-description sentence.
NegativeDraw object_filtered_negatives(std::uint32_t anchor_id, std::span<const std::uint32_t> object_ids,
                                       const SentenceCorpus& corpus, const MinerConfig& cfg, std::uint64_t salt = 0);

/// The (at most) two object sentences most similar to the anchor, ties to
/// the lower id.
std::vector<std::uint32_t> top_object_sentences(std::uint32_t anchor_id, std::span<const std::uint32_t> object_ids,
                                                const SentenceCorpus& corpus, std::size_t keep = 2);

struct Window {
  double start_s = 0.0;
  double end_s = 0.0;
};

/// cfg.n_aug_segments windows of length min(max_window_s, duration), each
/// starting uniformly in [seg.start_s, seg.end_s - length].
std::vector<Window> augment_segments(const SegmentAnnotation& seg, const MinerConfig& cfg, Rng& rng);

struct TripletRecord {
  std::string video_id;
  double start_s = 0.0;
  double end_s = 0.0;
  std::uint32_t positive_id = 0;
  std::uint32_t negative_id = 0;

  bool operator==(const TripletRecord&) const = default;
};

struct MiningReport {
  std::size_t segments = 0;
  std::size_t windows = 0;
  std::size_t records = 0;
  std::size_t unmined_anchors = 0;  // windows whose negative pool was empty
  std::size_t short_pools = 0;      // windows with 0 < pool < n
  std::size_t pool_min = 0;
  std::size_t pool_max = 0;
  double pool_mean = 0.0;
  /// Pool sizes bucketed by decade: [0], [1,10), [10,100), [100,1000), [1000,inf).
  std::array<std::size_t, 5> pool_histogram{};
  std::string config_echo;

  std::string to_json() const;
};

struct MiningResult {
  std::vector<TripletRecord> triplets;
  MiningReport report;
};

/// Triplets for every segment of the manifest: n_aug_segments windows per
/// segment, each paired with up to n negatives. Negatives are drawn from the
/// human-description sentences the manifest references. Output order is
/// manifest order regardless of cfg.threads.
MiningResult build_triplets(const DatasetManifest& manifest, const Matrix& sentence_table, const MinerConfig& cfg);

/// CSV with header `video_id,start_s,end_s,positive_id,negative_id`. A
/// non-empty `config_echo` is written as a leading `# ` comment line.
void write_triplets_csv(const std::filesystem::path& path, std::span<const TripletRecord> records,
                        const std::string& config_echo);
std::vector<TripletRecord> read_triplets_csv(const std::filesystem::path& path);

}  // namespace vtalign
