// Copyright 2026 The vtalign Authors
// SPDX-License-Identifier: Apache-2.0

#include "vtalign/miner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "vtalign/netmath.hpp"
#include "vtalign/parallel.hpp"
#include "vtalign/textio.hpp"

namespace vtalign {

using json = nlohmann::json;

void MinerConfig::validate() const {
  if (!(tau > 0.0 && tau < 1.0)) throw ValidationError("miner: tau must be in (0, 1)");
  if (n_negatives < 1) throw ValidationError("miner: n_negatives must be >= 1");
  if (n_aug_segments < 1) throw ValidationError("miner: n_aug_segments must be >= 1");
  if (!(max_window_s > 0.0)) throw ValidationError("miner: max_window_s must be positive");
}

std::string MinerConfig::to_json() const {
  return json{{"tau", tau},
              {"n_negatives", n_negatives},
              {"n_aug_segments", n_aug_segments},
              {"max_window_s", max_window_s},
              {"seed", seed},
              {"object_filter", object_filter}}
      .dump();
}

SentenceCorpus::SentenceCorpus(const Matrix& table) : table_(&table) {
  candidates_.resize(static_cast<std::size_t>(table.rows()));
  for (std::size_t i = 0; i < candidates_.size(); ++i) candidates_[i] = static_cast<std::uint32_t>(i);
  norms_.resize(candidates_.size());
  for (Eigen::Index r = 0; r < table.rows(); ++r) {
    double s = 0.0;
    for (Eigen::Index c = 0; c < table.cols(); ++c) s += static_cast<double>(table(r, c)) * table(r, c);
    norms_[static_cast<std::size_t>(r)] = std::sqrt(s);
  }
}

SentenceCorpus::SentenceCorpus(const Matrix& table, std::vector<std::uint32_t> candidate_ids)
    : SentenceCorpus(table) {
  std::sort(candidate_ids.begin(), candidate_ids.end());
  candidate_ids.erase(std::unique(candidate_ids.begin(), candidate_ids.end()), candidate_ids.end());
  for (auto id : candidate_ids) {
    if (id >= table.rows()) throw ValidationError("corpus: candidate id " + std::to_string(id) + " out of range");
  }
  candidates_ = std::move(candidate_ids);
}

double SentenceCorpus::similarity(std::uint32_t a, std::uint32_t b) const {
  const double na = norms_.at(a);
  const double nb = norms_.at(b);
  if (na <= 0.0 || nb <= 0.0) {
    throw ValidationError("cosine_sim: zero-norm sentence vector (id " + std::to_string(na <= 0.0 ? a : b) + ")");
  }
  const float* ra = table_->row(a).data();
  const float* rb = table_->row(b).data();
  double dot = 0.0;
  for (Eigen::Index c = 0; c < table_->cols(); ++c) dot += static_cast<double>(ra[c]) * rb[c];
  return dot / (na * nb);
}

bool is_similar(std::span<const float> a, std::span<const float> b, double tau) {
  return cosine_sim(a, b) > 1.0 - tau;
}

std::vector<std::uint32_t> negative_pool(std::span<const std::uint32_t> positives, const SentenceCorpus& corpus,
                                         double tau) {
  const double threshold = 1.0 - tau;
  std::vector<std::uint32_t> pool;
  for (std::uint32_t cand : corpus.candidates()) {
    bool ok = true;
    for (std::uint32_t pos : positives) {
      if (cand == pos || corpus.similarity(pos, cand) > threshold) {
        ok = false;
        break;
      }
    }
    if (ok) pool.push_back(cand);
  }
  return pool;
}

namespace {

NegativeDraw draw_from_pool(std::vector<std::uint32_t> pool, std::uint32_t anchor_id, const MinerConfig& cfg,
                            std::uint64_t salt) {
  NegativeDraw d;
  d.pool_size = pool.size();
  Rng rng(derive_seed(cfg.seed, anchor_id, salt));
  d.ids = sample_without_replacement(std::move(pool), cfg.n_negatives, rng);
  return d;
}

}  // namespace

NegativeDraw mine_negatives(std::uint32_t anchor_id, const SentenceCorpus& corpus, const MinerConfig& cfg,
                            std::uint64_t salt) {
  cfg.validate();
  if (corpus.size() < 2) throw ValidationError("mine_negatives: corpus needs at least 2 sentences");
  const std::uint32_t positives[] = {anchor_id};
  return draw_from_pool(negative_pool(positives, corpus, cfg.tau), anchor_id, cfg, salt);
}

NegativeDraw object_filtered_negatives(std::uint32_t anchor_id, std::span<const std::uint32_t> object_ids,
                                       const SentenceCorpus& corpus, const MinerConfig& cfg, std::uint64_t salt) {
  cfg.validate();
  if (corpus.size() < 2) throw ValidationError("object_filtered_negatives: corpus needs at least 2 sentences");
  std::vector<std::uint32_t> positives{anchor_id};
  positives.insert(positives.end(), object_ids.begin(), object_ids.end());
  return draw_from_pool(negative_pool(positives, corpus, cfg.tau), anchor_id, cfg, salt);
}

std::vector<std::uint32_t> top_object_sentences(std::uint32_t anchor_id, std::span<const std::uint32_t> object_ids,
                                                const SentenceCorpus& corpus, std::size_t keep) {
  std::vector<std::pair<double, std::uint32_t>> ranked;
  std::set<std::uint32_t> seen;
  for (auto id : object_ids) {
    if (seen.insert(id).second) ranked.emplace_back(corpus.similarity(anchor_id, id), id);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<std::uint32_t> out;
  for (std::size_t i = 0; i < ranked.size() && i < keep; ++i) out.push_back(ranked[i].second);
  return out;
}

std::vector<Window> augment_segments(const SegmentAnnotation& seg, const MinerConfig& cfg, Rng& rng) {
  const double duration = seg.end_s - seg.start_s;
  if (!(duration > 0.0)) throw ValidationError("augment_segments: empty segment");
  const double length = std::min(cfg.max_window_s, duration);
  const double slack = duration - length;
  std::vector<Window> windows;
  windows.reserve(cfg.n_aug_segments);
  for (std::size_t i = 0; i < cfg.n_aug_segments; ++i) {
    const double start = slack > 0.0 ? seg.start_s + rng.uniform01() * slack : seg.start_s;
    windows.push_back({start, slack > 0.0 ? start + length : seg.end_s});
  }
  return windows;
}

std::string MiningReport::to_json() const {
  json j{{"segments", segments},
         {"windows", windows},
         {"records", records},
         {"unmined_anchors", unmined_anchors},
         {"short_pools", short_pools},
         {"pool_min", pool_min},
         {"pool_max", pool_max},
         {"pool_mean", pool_mean},
         {"pool_histogram",
          {{"0", pool_histogram[0]},
           {"1-9", pool_histogram[1]},
           {"10-99", pool_histogram[2]},
           {"100-999", pool_histogram[3]},
           {"1000+", pool_histogram[4]}}}};
  j["config"] = config_echo.empty() ? json(nullptr) : json::parse(config_echo);
  return j.dump(2);
}

MiningResult build_triplets(const DatasetManifest& manifest, const Matrix& sentence_table, const MinerConfig& cfg) {
  cfg.validate();
  if (sentence_table.rows() != static_cast<Eigen::Index>(manifest.sentence_count)) {
    throw ValidationError("build_triplets: sentence table does not match manifest");
  }
  struct Job {
    std::size_t video;
    std::size_t segment;
  };
  std::vector<Job> jobs;
  std::vector<std::uint32_t> human_ids;
  for (std::size_t v = 0; v < manifest.videos.size(); ++v) {
    for (std::size_t s = 0; s < manifest.videos[v].segments.size(); ++s) {
      jobs.push_back({v, s});
      human_ids.push_back(manifest.videos[v].segments[s].sentence_id);
    }
  }
  MiningResult result;
  result.report.config_echo = cfg.to_json();
  if (jobs.empty()) return result;

  const SentenceCorpus corpus(sentence_table, human_ids);

  struct JobOut {
    std::vector<TripletRecord> records;
    std::vector<std::size_t> pools;
  };
  std::vector<JobOut> outs(jobs.size());
  parallel_for(jobs.size(), cfg.threads, [&](std::size_t j) {
    const VideoEntry& video = manifest.videos[jobs[j].video];
    const SegmentAnnotation& seg = video.segments[jobs[j].segment];
    Rng rng(derive_seed(cfg.seed, hash_string(video.video_id), jobs[j].segment));
    const auto windows = augment_segments(seg, cfg, rng);
    std::vector<std::uint32_t> objects;
    if (cfg.object_filter && !seg.object_sentence_ids.empty()) {
      objects = top_object_sentences(seg.sentence_id, seg.object_sentence_ids, corpus);
    }
    for (std::size_t w = 0; w < windows.size(); ++w) {
      const NegativeDraw draw = objects.empty()
                                    ? mine_negatives(seg.sentence_id, corpus, cfg, w)
                                    : object_filtered_negatives(seg.sentence_id, objects, corpus, cfg, w);
      outs[j].pools.push_back(draw.pool_size);
      for (auto neg : draw.ids) {
        outs[j].records.push_back({video.video_id, windows[w].start_s, windows[w].end_s, seg.sentence_id, neg});
      }
    }
  });

  MiningReport& rep = result.report;
  rep.segments = jobs.size();
  rep.pool_min = static_cast<std::size_t>(-1);
  double pool_sum = 0.0;
  for (auto& out : outs) {
    for (std::size_t pool : out.pools) {
      ++rep.windows;
      pool_sum += static_cast<double>(pool);
      rep.pool_min = std::min(rep.pool_min, pool);
      rep.pool_max = std::max(rep.pool_max, pool);
      if (pool == 0) ++rep.unmined_anchors;
      else if (pool < cfg.n_negatives) ++rep.short_pools;
      const std::size_t bin = pool == 0 ? 0 : pool < 10 ? 1 : pool < 100 ? 2 : pool < 1000 ? 3 : 4;
      ++rep.pool_histogram[bin];
    }
    for (auto& r : out.records) result.triplets.push_back(std::move(r));
  }
  rep.records = result.triplets.size();
  rep.pool_mean = rep.windows ? pool_sum / static_cast<double>(rep.windows) : 0.0;
  if (rep.windows == 0) rep.pool_min = 0;
  return result;
}

void write_triplets_csv(const std::filesystem::path& path, std::span<const TripletRecord> records,
                        const std::string& config_echo) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw ValidationError("cannot open for writing: " + path.string());
  if (!config_echo.empty()) out << "# " << config_echo << '\n';
  out << "video_id,start_s,end_s,positive_id,negative_id\n";
  for (const auto& r : records) {
    if (r.video_id.find_first_of(",\n\"") != std::string::npos) {
      throw ValidationError("write_triplets_csv: video_id contains a CSV delimiter: " + r.video_id);
    }
    out << r.video_id << ',' << format_number(r.start_s) << ',' << format_number(r.end_s) << ',' << r.positive_id
        << ',' << r.negative_id << '\n';
  }
  if (!out) throw ValidationError("write failed: " + path.string());
}

std::vector<TripletRecord> read_triplets_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open triplet file: " + path.string());
  std::vector<TripletRecord> out;
  std::string line;
  bool header_seen = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != "video_id,start_s,end_s,positive_id,negative_id") {
        throw ValidationError(path.string() + ": unexpected header \"" + line + "\"");
      }
      header_seen = true;
      continue;
    }
    const std::string where = path.string() + ":" + std::to_string(lineno);
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 5) throw ValidationError(where + ": expected 5 fields");
    TripletRecord r;
    r.video_id = f[0];
    r.start_s = parse_number(f[1], where);
    r.end_s = parse_number(f[2], where);
    r.positive_id = static_cast<std::uint32_t>(parse_number(f[3], where));
    r.negative_id = static_cast<std::uint32_t>(parse_number(f[4], where));
    out.push_back(std::move(r));
  }
  if (!header_seen) throw ValidationError(path.string() + ": missing header");
  return out;
}

}  // namespace vtalign
