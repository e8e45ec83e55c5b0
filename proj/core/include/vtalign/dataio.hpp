// Copyright 2026 The vtalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vtalign/tensor.hpp"

namespace vtalign {

// ---------------------------------------------------------------------------
// FVEC: "FVEC1" + pad byte, u32 rows, u32 cols, rows*cols f32, little-endian.
// ---------------------------------------------------------------------------

/// Reads a matrix stored in FVEC format. Values are returned bit-exactly.
/// Throws ValidationError on a missing file, bad magic, size mismatch, an
/// empty matrix or a non-finite value (the message names the row).
Matrix read_fvec(const std::filesystem::path& path);

/// Reads only the (rows, cols) header of an FVEC file.
std::pair<std::uint32_t, std::uint32_t> read_fvec_shape(const std::filesystem::path& path);

/// Writes `m` in FVEC format. Rejects empty or non-finite matrices before
/// touching the file.
void write_fvec(const std::filesystem::path& path, const Matrix& m);

// ---------------------------------------------------------------------------
// Dataset manifest (JSON).
// ---------------------------------------------------------------------------

struct SegmentAnnotation {
  double start_s = 0.0;
  double end_s = 0.0;
  std::uint32_t sentence_id = 0;
  std::vector<std::uint32_t> object_sentence_ids;
};

struct VideoEntry {
  std::string video_id;
  std::filesystem::path fvec_path;  // resolved against the manifest directory
  std::optional<std::string> class_name;
  std::vector<SegmentAnnotation> segments;
  std::uint32_t rows = 0;  // feature rows (= duration in seconds)
  std::uint32_t cols = 0;  // d_c
};

struct ClassPrototypeRef {
  std::string class_name;
  std::uint32_t prototype_sentence_id = 0;
};

/// A loaded manifest. Every cross-reference has been validated, so code
/// downstream may index the sentence table with any id found here.
struct DatasetManifest {
  std::filesystem::path source;  // manifest file path
  std::filesystem::path sentence_table_path;
  std::vector<VideoEntry> videos;
  std::vector<ClassPrototypeRef> class_prototypes;
  std::uint32_t sentence_count = 0;
  std::uint32_t sentence_dim = 0;  // d_s
  std::uint32_t feature_dim = 0;   // d_c, constant across videos

  Matrix load_sentence_table() const { return read_fvec(sentence_table_path); }
  Matrix load_features(std::size_t video_index) const {
    return read_fvec(videos.at(video_index).fvec_path);
  }
  std::optional<std::size_t> find_video(const std::string& video_id) const;
  std::size_t segment_count() const;
};

/// Parses and eagerly validates a manifest. Relative paths resolve against
/// the manifest's directory. Throws ValidationError naming the first problem.
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Serializes a manifest. Paths are written relative to the manifest's
/// directory when possible.
void save_manifest(const std::filesystem::path& path, const DatasetManifest& m);

/// Feature rows covered by the window [start_s, end_s) at one feature per
/// second: floor(start_s) .. ceil(end_s) - 1, clamped to [0, rows - 1], at
/// least one row. Returns (first_row, row_count).
std::pair<std::size_t, std::size_t> segment_rows(double start_s, double end_s, std::size_t rows);

// ---------------------------------------------------------------------------
// Checkpoint: "CKPT1" + pad, u32 config length + UTF-8 config text, u32
// tensor count, then per tensor: u16 name length, name bytes, u8 ndim, u32
// dims, f32 data.
// ---------------------------------------------------------------------------

struct Checkpoint {
  std::string config_echo;
  std::map<std::string, Matrix> tensors;

  bool operator==(const Checkpoint& other) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Loads and checks names and shapes against `expected` (name -> rows, cols).
/// Throws ValidationError listing the first mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::map<std::string, std::pair<long, long>>& expected);

}  // namespace vtalign
