// Copyright 2026 The vtalign Authors
// SPDX-License-Identifier: Apache-2.0

#include "vtalign/dataio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "json.hpp"

namespace vtalign {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr char kFvecMagic[6] = {'F', 'V', 'E', 'C', '1', '\0'};
constexpr char kCkptMagic[6] = {'C', 'K', 'P', 'T', '1', '\0'};
constexpr std::size_t kFvecHeader = 6 + 4 + 4;

// Little-endian byte sink/source independent of host order.
class ByteWriter {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const char*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
  void floats(const float* p, std::size_t n) {
    buf_.reserve(buf_.size() + 4 * n);
    for (std::size_t i = 0; i < n; ++i) f32(p[i]);
  }

  void write_to(const fs::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot open for writing: " + path.string());
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw ValidationError("write failed: " + path.string());
  }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  ByteReader(std::vector<char> data, std::string origin)
      : data_(std::move(data)), origin_(std::move(origin)) {}

  std::size_t remaining() const { return data_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw ValidationError(origin_ + ": truncated payload while reading " + what);
    }
  }
  void raw(void* dst, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(dst, data_.data() + pos_, n);
    pos_ += n;
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(static_cast<unsigned char>(data_[pos_++]) << (8 * i));
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_++])) << (8 * i);
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }

  const std::string& origin() const { return origin_; }

 private:
  std::vector<char> data_;
  std::size_t pos_ = 0;
  std::string origin_;
};

std::vector<char> slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path.string());
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void check_finite_rows(const Matrix& m, const std::string& origin) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (!m.row(r).allFinite()) {
      throw ValidationError(origin + ": non-finite value in row " + std::to_string(r));
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// FVEC
// ---------------------------------------------------------------------------

std::pair<std::uint32_t, std::uint32_t> read_fvec_shape(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path.string());
  std::vector<char> head(kFvecHeader);
  in.read(head.data(), static_cast<std::streamsize>(head.size()));
  if (in.gcount() != static_cast<std::streamsize>(kFvecHeader)) {
    throw ValidationError(path.string() + ": truncated FVEC header");
  }
  ByteReader r(std::move(head), path.string());
  char magic[6];
  r.raw(magic, 6, "magic");
  if (std::memcmp(magic, kFvecMagic, 5) != 0) {
    throw ValidationError(path.string() + ": bad magic (expected FVEC1)");
  }
  const std::uint32_t rows = r.u32("rows");
  const std::uint32_t cols = r.u32("cols");
  if (rows == 0 || cols == 0) throw ValidationError(path.string() + ": empty matrix");
  return {rows, cols};
}

Matrix read_fvec(const fs::path& path) {
  ByteReader r(slurp(path), path.string());
  char magic[6];
  if (r.remaining() < kFvecHeader) throw ValidationError(path.string() + ": truncated FVEC header");
  r.raw(magic, 6, "magic");
  if (std::memcmp(magic, kFvecMagic, 5) != 0) {
    throw ValidationError(path.string() + ": bad magic (expected FVEC1)");
  }
  const std::uint32_t rows = r.u32("rows");
  const std::uint32_t cols = r.u32("cols");
  if (rows == 0 || cols == 0) throw ValidationError(path.string() + ": empty matrix");
  const std::uint64_t payload = std::uint64_t{rows} * cols * 4;
  if (r.remaining() != payload) {
    throw ValidationError(path.string() + ": declared " + std::to_string(rows) + "x" +
                          std::to_string(cols) + " does not match payload of " +
                          std::to_string(r.remaining()) + " bytes (truncated payload or trailing data)");
  }
  Matrix m(rows, cols);
  float* dst = m.data();
  for (std::uint64_t i = 0; i < std::uint64_t{rows} * cols; ++i) dst[i] = r.f32("data");
  check_finite_rows(m, path.string());
  return m;
}

void write_fvec(const fs::path& path, const Matrix& m) {
  if (m.rows() < 1 || m.cols() < 1) throw ValidationError("write_fvec: empty matrix");
  check_finite_rows(m, "write_fvec(" + path.string() + ")");
  ByteWriter w;
  w.raw(kFvecMagic, 6);
  w.u32(static_cast<std::uint32_t>(m.rows()));
  w.u32(static_cast<std::uint32_t>(m.cols()));
  w.floats(m.data(), static_cast<std::size_t>(m.size()));
  w.write_to(path);
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

std::optional<std::size_t> DatasetManifest::find_video(const std::string& video_id) const {
  for (std::size_t i = 0; i < videos.size(); ++i) {
    if (videos[i].video_id == video_id) return i;
  }
  return std::nullopt;
}

std::size_t DatasetManifest::segment_count() const {
  std::size_t n = 0;
  for (const auto& v : videos) n += v.segments.size();
  return n;
}

namespace {

template <class T>
T require(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) {
    throw ValidationError(where + ": missing field \"" + key + "\"");
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(where + ": field \"" + key + "\" has wrong type (" + e.what() + ")");
  }
}

fs::path resolve(const fs::path& base_dir, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : (base_dir / path).lexically_normal();
}

}  // namespace

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open manifest: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": malformed JSON: " + e.what());
  }

  const fs::path base = path.parent_path();
  const std::string origin = path.string();
  DatasetManifest m;
  m.source = path;
  m.sentence_table_path = resolve(base, require<std::string>(doc, "sentence_table_path", origin));
  {
    const auto [rows, cols] = read_fvec_shape(m.sentence_table_path);
    m.sentence_count = rows;
    m.sentence_dim = cols;
  }

  auto check_sentence = [&](std::uint32_t id, const std::string& where) {
    if (id >= m.sentence_count) {
      throw ValidationError(where + ": dangling sentence reference " + std::to_string(id) +
                            " (sentence table has " + std::to_string(m.sentence_count) + " rows)");
    }
  };

  if (!doc.contains("videos") || !doc["videos"].is_array()) {
    throw ValidationError(origin + ": missing array \"videos\"");
  }
  std::set<std::string> seen_videos;
  for (std::size_t vi = 0; vi < doc["videos"].size(); ++vi) {
    const json& jv = doc["videos"][vi];
    const std::string where = origin + ": videos[" + std::to_string(vi) + "]";
    VideoEntry v;
    v.video_id = require<std::string>(jv, "video_id", where);
    if (!seen_videos.insert(v.video_id).second) {
      throw ValidationError(where + ": duplicate video_id \"" + v.video_id + "\"");
    }
    v.fvec_path = resolve(base, require<std::string>(jv, "fvec_path", where));
    if (!fs::exists(v.fvec_path)) {
      throw ValidationError(where + ": unresolvable fvec_path " + v.fvec_path.string());
    }
    const auto [rows, cols] = read_fvec_shape(v.fvec_path);
    v.rows = rows;
    v.cols = cols;
    if (m.feature_dim == 0) m.feature_dim = cols;
    if (cols != m.feature_dim) {
      throw ValidationError(where + ": feature dimension " + std::to_string(cols) +
                            " differs from dataset dimension " + std::to_string(m.feature_dim));
    }
    if (jv.contains("class_name") && !jv["class_name"].is_null()) {
      v.class_name = require<std::string>(jv, "class_name", where);
    }
    if (jv.contains("segments")) {
      if (!jv["segments"].is_array()) throw ValidationError(where + ": \"segments\" must be an array");
      for (std::size_t si = 0; si < jv["segments"].size(); ++si) {
        const json& js = jv["segments"][si];
        const std::string swhere = where + ".segments[" + std::to_string(si) + "]";
        SegmentAnnotation s;
        s.start_s = require<double>(js, "start_s", swhere);
        s.end_s = require<double>(js, "end_s", swhere);
        s.sentence_id = require<std::uint32_t>(js, "sentence_id", swhere);
        if (js.contains("object_sentence_ids")) {
          s.object_sentence_ids = require<std::vector<std::uint32_t>>(js, "object_sentence_ids", swhere);
        }
        if (!std::isfinite(s.start_s) || !std::isfinite(s.end_s) || s.start_s < 0.0) {
          throw ValidationError(swhere + ": segment bounds must be finite and start_s >= 0");
        }
        if (s.end_s <= s.start_s) {
          throw ValidationError(swhere + ": segment end_s (" + std::to_string(s.end_s) +
                                ") must exceed start_s (" + std::to_string(s.start_s) + ")");
        }
        if (s.end_s > static_cast<double>(v.rows)) {
          throw ValidationError(swhere + ": segment end_s " + std::to_string(s.end_s) +
                                " exceeds video duration " + std::to_string(v.rows) + " s");
        }
        check_sentence(s.sentence_id, swhere);
        for (auto id : s.object_sentence_ids) check_sentence(id, swhere);
        v.segments.push_back(std::move(s));
      }
    }
    m.videos.push_back(std::move(v));
  }

  if (doc.contains("class_prototypes") && !doc["class_prototypes"].is_null()) {
    if (!doc["class_prototypes"].is_array()) {
      throw ValidationError(origin + ": \"class_prototypes\" must be an array");
    }
    std::set<std::string> names;
    for (std::size_t ci = 0; ci < doc["class_prototypes"].size(); ++ci) {
      const json& jc = doc["class_prototypes"][ci];
      const std::string where = origin + ": class_prototypes[" + std::to_string(ci) + "]";
      ClassPrototypeRef c;
      c.class_name = require<std::string>(jc, "class_name", where);
      c.prototype_sentence_id = require<std::uint32_t>(jc, "prototype_sentence_id", where);
      if (!names.insert(c.class_name).second) {
        throw ValidationError(where + ": duplicate class name \"" + c.class_name + "\"");
      }
      check_sentence(c.prototype_sentence_id, where);
      m.class_prototypes.push_back(std::move(c));
    }
    if (!names.empty()) {
      for (const auto& v : m.videos) {
        if (v.class_name && !names.count(*v.class_name)) {
          throw ValidationError(origin + ": video \"" + v.video_id + "\" has class \"" + *v.class_name +
                                "\" with no prototype");
        }
      }
    }
  }
  return m;
}

void save_manifest(const fs::path& path, const DatasetManifest& m) {
  const fs::path base = path.parent_path().empty() ? fs::path(".") : path.parent_path();
  auto rel = [&](const fs::path& p) {
    std::error_code ec;
    fs::path r = fs::relative(p, base, ec);
    return (ec || r.empty()) ? p.generic_string() : r.generic_string();
  };
  json doc;
  doc["sentence_table_path"] = rel(m.sentence_table_path);
  json videos = json::array();
  for (const auto& v : m.videos) {
    json jv;
    jv["video_id"] = v.video_id;
    jv["fvec_path"] = rel(v.fvec_path);
    if (v.class_name) jv["class_name"] = *v.class_name;
    json segs = json::array();
    for (const auto& s : v.segments) {
      segs.push_back({{"start_s", s.start_s},
                      {"end_s", s.end_s},
                      {"sentence_id", s.sentence_id},
                      {"object_sentence_ids", s.object_sentence_ids}});
    }
    jv["segments"] = std::move(segs);
    videos.push_back(std::move(jv));
  }
  doc["videos"] = std::move(videos);
  json protos = json::array();
  for (const auto& c : m.class_prototypes) {
    protos.push_back({{"class_name", c.class_name}, {"prototype_sentence_id", c.prototype_sentence_id}});
  }
  doc["class_prototypes"] = std::move(protos);

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ValidationError("cannot open for writing: " + path.string());
  out << doc.dump(2) << '\n';
}

std::pair<std::size_t, std::size_t> segment_rows(double start_s, double end_s, std::size_t rows) {
  if (rows == 0) throw ValidationError("segment_rows: empty feature stack");
  const double last = static_cast<double>(rows - 1);
  const double first_f = std::clamp(std::floor(start_s), 0.0, last);
  const double last_f = std::clamp(std::ceil(end_s) - 1.0, 0.0, last);
  const auto first = static_cast<std::size_t>(first_f);
  const auto end = static_cast<std::size_t>(std::max(last_f, first_f));
  return {first, end - first + 1};
}

// ---------------------------------------------------------------------------
// Checkpoint
// ---------------------------------------------------------------------------

bool Checkpoint::operator==(const Checkpoint& other) const {
  if (config_echo != other.config_echo || tensors.size() != other.tensors.size()) return false;
  auto a = tensors.begin();
  auto b = other.tensors.begin();
  for (; a != tensors.end(); ++a, ++b) {
    if (a->first != b->first) return false;
    if (a->second.rows() != b->second.rows() || a->second.cols() != b->second.cols()) return false;
    if (std::memcmp(a->second.data(), b->second.data(),
                    sizeof(float) * static_cast<std::size_t>(a->second.size())) != 0) {
      return false;
    }
  }
  return true;
}

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
  if (ckpt.tensors.empty()) throw ValidationError("save_checkpoint: no parameters");
  ByteWriter w;
  w.raw(kCkptMagic, 6);
  w.u32(static_cast<std::uint32_t>(ckpt.config_echo.size()));
  w.raw(ckpt.config_echo.data(), ckpt.config_echo.size());
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, m] : ckpt.tensors) {
    if (name.empty() || name.size() > 0xffff) throw ValidationError("save_checkpoint: bad tensor name");
    if (m.size() == 0) throw ValidationError("save_checkpoint: tensor " + name + " is empty");
    check_finite_rows(m, "save_checkpoint(" + name + ")");
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.raw(name.data(), name.size());
    w.u8(2);
    w.u32(static_cast<std::uint32_t>(m.rows()));
    w.u32(static_cast<std::uint32_t>(m.cols()));
    w.floats(m.data(), static_cast<std::size_t>(m.size()));
  }
  w.write_to(path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  ByteReader r(slurp(path), path.string());
  char magic[6];
  r.raw(magic, 6, "magic");
  if (std::memcmp(magic, kCkptMagic, 5) != 0) {
    throw ValidationError(path.string() + ": bad magic (expected CKPT1)");
  }
  Checkpoint ck;
  const std::uint32_t cfg_len = r.u32("config length");
  ck.config_echo.resize(cfg_len);
  r.raw(ck.config_echo.data(), cfg_len, "config text");
  const std::uint32_t count = r.u32("tensor count");
  if (count == 0) throw ValidationError(path.string() + ": no parameters");
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::uint16_t name_len = r.u16("name length");
    std::string name(name_len, '\0');
    r.raw(name.data(), name_len, "tensor name");
    const std::uint8_t ndim = r.u8("ndim");
    if (ndim < 1 || ndim > 2) {
      throw ValidationError(path.string() + ": tensor " + name + " has unsupported ndim " + std::to_string(ndim));
    }
    std::uint32_t dims[2] = {1, 1};
    for (std::uint8_t d = 0; d < ndim; ++d) dims[2 - ndim + d] = r.u32("dims");
    const std::uint64_t n = std::uint64_t{dims[0]} * dims[1];
    if (n == 0) throw ValidationError(path.string() + ": tensor " + name + " is empty");
    r.need(n * 4, "tensor data");
    Matrix m(dims[0], dims[1]);
    for (std::uint64_t i = 0; i < n; ++i) m.data()[i] = r.f32("tensor data");
    check_finite_rows(m, path.string() + ":" + name);
    if (!ck.tensors.emplace(std::move(name), std::move(m)).second) {
      throw ValidationError(path.string() + ": duplicate tensor name");
    }
  }
  if (r.remaining() != 0) throw ValidationError(path.string() + ": trailing bytes after last tensor");
  return ck;
}

Checkpoint load_checkpoint(const fs::path& path,
                           const std::map<std::string, std::pair<long, long>>& expected) {
  Checkpoint ck = load_checkpoint(path);
  for (const auto& [name, shape] : expected) {
    auto it = ck.tensors.find(name);
    if (it == ck.tensors.end()) {
      throw ValidationError(path.string() + ": missing tensor " + name);
    }
    if (it->second.rows() != shape.first || it->second.cols() != shape.second) {
      std::ostringstream os;
      os << path.string() << ": tensor " << name << " has shape " << it->second.rows() << "x"
         << it->second.cols() << ", architecture expects " << shape.first << "x" << shape.second;
      throw ValidationError(os.str());
    }
  }
  for (const auto& [name, m] : ck.tensors) {
    if (!expected.count(name)) throw ValidationError(path.string() + ": unexpected tensor " + name);
  }
  return ck;
}

}  // namespace vtalign
