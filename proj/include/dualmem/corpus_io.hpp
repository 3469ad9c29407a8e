// Copyright (c) 2026, The dualmem Authors
// SPDX-License-Identifier: Apache-2.0

// Region-record files (line-delimited JSON or the fixed-size `DMRF` binary
// variant), ground-truth files, and the per-image ingestion rule.

#pragma once

#include <array>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "dualmem/core.hpp"

namespace dualmem {

struct RegionFile {
  int d = 0;
  std::vector<RegionRecord> records;  // file order
};

struct ImageBatch {
  std::string image_id;
  std::vector<RegionRecord> regions;  // score-descending, region_id tiebreak
};

/// An ingested corpus: images in order of first appearance in the file.
struct Corpus {
  int d = 0;
  std::vector<ImageBatch> images;

  std::vector<std::string> image_ids() const {
    std::vector<std::string> ids;
    ids.reserve(images.size());
    for (const auto& im : images) ids.push_back(im.image_id);
    return ids;
  }

  std::size_t region_count() const {
    std::size_t n = 0;
    for (const auto& im : images) n += im.regions.size();
    return n;
  }

  /// Index of each image id in `images`.
  std::unordered_map<std::string, std::size_t> index() const {
    std::unordered_map<std::string, std::size_t> idx;
    for (std::size_t i = 0; i < images.size(); ++i) idx.emplace(images[i].image_id, i);
    return idx;
  }
};

struct GroundTruthBox {
  std::string image_id;
  BoundingBox box;
  std::string class_name;
  bool known_flag = false;
};

namespace io {

inline constexpr std::array<char, 4> kRegionMagic = {'D', 'M', 'R', 'F'};
inline constexpr std::uint32_t kRegionVersion = 1;
inline constexpr std::size_t kIdField = 64;  // bytes per string field, NUL padded

inline std::size_t binary_record_size(int d) { return 3 * kIdField + 4 + 4 * 4 + 4 + 4 * std::size_t(d); }

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}
inline void put_f32(std::string& out, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  put_u32(out, u);
}
inline void put_f64(std::string& out, double f) {
  std::uint64_t u;
  std::memcpy(&u, &f, 8);
  put_u64(out, u);
}

/// Little-endian reader over an in-memory byte buffer.
class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    auto p = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    auto p = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
  }
  float f32() {
    std::uint32_t u = u32();
    float f;
    std::memcpy(&f, &u, 4);
    return f;
  }
  double f64() {
    std::uint64_t u = u64();
    double f;
    std::memcpy(&f, &u, 8);
    return f;
  }
  std::string_view take(std::size_t n) {
    if (pos_ + n > bytes_.size())
      throw Error(ErrorKind::Format, "truncated input at offset " + std::to_string(pos_));
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string str() {
    auto n = u32();
    return std::string(take(n));
  }
  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

inline void put_str(std::string& out, std::string_view s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed for '" + path.string() + "'");
}

inline BoundingBox box_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) throw Error(ErrorKind::Format, "box must be [x1,y1,x2,y2]");
  BoundingBox b{j[0].get<float>(), j[1].get<float>(), j[2].get<float>(), j[3].get<float>()};
  if (!b.valid()) throw Error(ErrorKind::Format, "degenerate box (need x2 > x1 and y2 > y1)");
  return b;
}

inline nlohmann::json box_to_json(const BoundingBox& b) { return nlohmann::json::array({b.x1, b.y1, b.x2, b.y2}); }

/// Iterates over non-empty lines, passing 1-based line numbers.
template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (detail::trim(line).empty()) continue;
    fn(line_no, line);
  }
}

inline nlohmann::json parse_json_line(std::size_t line_no, std::string_view line) {
  try {
    return nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::Parse, "line " + std::to_string(line_no) + ", byte " + std::to_string(e.byte) + ": " + e.what());
  }
}

inline void check_record(const RegionRecord& r, int d, const std::string& where) {
  if (static_cast<int>(r.feature.size()) != d)
    throw Error(ErrorKind::DimensionMismatch, where + ": region '" + r.region_id + "' has feature dimension " +
                                                  std::to_string(r.feature.size()) + ", expected " + std::to_string(d));
  for (float f : r.feature)
    if (!std::isfinite(f)) throw Error(ErrorKind::NonFinite, where + ": region '" + r.region_id + "' has a non-finite feature");
  if (!r.box.valid()) throw Error(ErrorKind::Format, where + ": region '" + r.region_id + "' has a degenerate box");
  if (!(r.score >= 0 && r.score <= 1)) throw Error(ErrorKind::Format, where + ": region '" + r.region_id + "' score outside [0,1]");
}

inline RegionFile parse_jsonl_regions(std::string_view text) {
  RegionFile file;
  bool have_header = false;
  std::unordered_set<std::string> ids;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    auto j = parse_json_line(line_no, line);
    const std::string where = "line " + std::to_string(line_no);
    try {
      if (!have_header) {
        if (!j.contains("d") || j.value("version", 0) != 1)
          throw Error(ErrorKind::Format, where + ": expected header {\"d\": <int>, \"version\": 1}");
        file.d = j.at("d").get<int>();
        if (file.d < 1) throw Error(ErrorKind::Format, where + ": d must be >= 1");
        have_header = true;
        return;
      }
      RegionRecord r;
      r.region_id = j.at("region_id").get<std::string>();
      r.image_id = j.at("image_id").get<std::string>();
      r.box = box_from_json(j.at("box"));
      r.score = j.at("score").get<float>();
      r.feature = j.at("feature").get<std::vector<float>>();
      if (auto it = j.find("gt_label"); it != j.end() && !it->is_null()) r.gt_label = it->get<std::string>();
      check_record(r, file.d, where);
      if (!ids.insert(r.region_id).second)
        throw Error(ErrorKind::DuplicateId, where + ": duplicate region_id '" + r.region_id + "'");
      file.records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::Parse, where + ": " + e.what());
    }
  });
  if (!have_header) throw Error(ErrorKind::Format, "region file has no header line");
  return file;
}

inline std::string fixed_string(std::string_view s, const std::string& what) {
  if (s.size() >= kIdField)
    throw Error(ErrorKind::Format, what + " '" + std::string(s) + "' exceeds " + std::to_string(kIdField - 1) + " bytes");
  std::string out(s);
  out.resize(kIdField, '\0');
  return out;
}

inline std::string from_fixed(std::string_view s) {
  auto nul = s.find('\0');
  return std::string(s.substr(0, nul));
}

inline RegionFile parse_binary_regions(std::string_view bytes) {
  ByteReader rd(bytes);
  auto magic = rd.take(4);
  if (magic != std::string_view(kRegionMagic.data(), 4)) throw Error(ErrorKind::Format, "bad magic, expected DMRF");
  auto version = rd.u32();
  if (version != kRegionVersion) throw Error(ErrorKind::Format, "unsupported DMRF version " + std::to_string(version));
  RegionFile file;
  file.d = static_cast<int>(rd.u32());
  auto count = rd.u32();
  if (file.d < 1) throw Error(ErrorKind::Format, "DMRF: d must be >= 1");
  file.records.reserve(count);
  std::unordered_set<std::string> ids;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string where = "record " + std::to_string(i) + " (offset " + std::to_string(rd.offset()) + ")";
    RegionRecord r;
    r.region_id = from_fixed(rd.take(kIdField));
    r.image_id = from_fixed(rd.take(kIdField));
    auto label = from_fixed(rd.take(kIdField));
    auto flags = rd.u32();
    if (flags & 1u) r.gt_label = label;
    r.box.x1 = rd.f32();
    r.box.y1 = rd.f32();
    r.box.x2 = rd.f32();
    r.box.y2 = rd.f32();
    r.score = rd.f32();
    r.feature.resize(std::size_t(file.d));
    for (auto& f : r.feature) f = rd.f32();
    check_record(r, file.d, where);
    if (!ids.insert(r.region_id).second)
      throw Error(ErrorKind::DuplicateId, where + ": duplicate region_id '" + r.region_id + "'");
    file.records.push_back(std::move(r));
  }
  if (!rd.done()) throw Error(ErrorKind::Format, "DMRF: trailing bytes after " + std::to_string(count) + " records");
  return file;
}

}  // namespace io

/// Reads either format; the binary variant is recognised by its magic.
inline RegionFile read_region_file(const std::filesystem::path& path) {
  auto bytes = io::read_file(path);
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), io::kRegionMagic.data(), 4) == 0) return io::parse_binary_regions(bytes);
  return io::parse_jsonl_regions(bytes);
}

inline std::string region_file_to_jsonl(const RegionFile& file) {
  std::string out = nlohmann::json{{"d", file.d}, {"version", 1}}.dump();
  out.push_back('\n');
  for (const auto& r : file.records) {
    io::check_record(r, file.d, "write");
    nlohmann::json j;
    j["region_id"] = r.region_id;
    j["image_id"] = r.image_id;
    j["box"] = io::box_to_json(r.box);
    j["score"] = r.score;
    j["feature"] = r.feature;
    j["gt_label"] = r.gt_label ? nlohmann::json(*r.gt_label) : nlohmann::json(nullptr);
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

inline std::string region_file_to_binary(const RegionFile& file) {
  std::string out;
  out.reserve(16 + file.records.size() * io::binary_record_size(file.d));
  out.append(io::kRegionMagic.data(), 4);
  io::put_u32(out, io::kRegionVersion);
  io::put_u32(out, static_cast<std::uint32_t>(file.d));
  io::put_u32(out, static_cast<std::uint32_t>(file.records.size()));
  for (const auto& r : file.records) {
    io::check_record(r, file.d, "write");
    out += io::fixed_string(r.region_id, "region_id");
    out += io::fixed_string(r.image_id, "image_id");
    out += io::fixed_string(r.gt_label.value_or(""), "gt_label");
    io::put_u32(out, r.gt_label ? 1u : 0u);
    io::put_f32(out, r.box.x1);
    io::put_f32(out, r.box.y1);
    io::put_f32(out, r.box.x2);
    io::put_f32(out, r.box.y2);
    io::put_f32(out, r.score);
    for (float f : r.feature) io::put_f32(out, f);
  }
  return out;
}

inline void write_region_file(const std::filesystem::path& path, const RegionFile& file, bool binary = false) {
  io::write_file(path, binary ? region_file_to_binary(file) : region_file_to_jsonl(file));
}

/// Converts between the text and binary encodings; the direction follows the
/// input's format.
inline void convert_region_file(const std::filesystem::path& in, const std::filesystem::path& out) {
  auto bytes = io::read_file(in);
  const bool is_binary = bytes.size() >= 4 && std::memcmp(bytes.data(), io::kRegionMagic.data(), 4) == 0;
  auto file = is_binary ? io::parse_binary_regions(bytes) : io::parse_jsonl_regions(bytes);
  write_region_file(out, file, !is_binary);
}

inline void l2_normalize(std::vector<float>& f) {
  double s = 0;
  for (float v : f) s += double(v) * double(v);
  if (s <= 0) return;
  const double inv = 1.0 / std::sqrt(s);
  for (auto& v : f) v = static_cast<float>(double(v) * inv);
}

/// Groups records by image (first-appearance order), orders each image's
/// regions by score descending with region_id as tiebreak, and keeps the top
/// `n_proposals_per_image`.
inline Corpus ingest_records(RegionFile file, const Config& config) {
  if (config.d != 0 && config.d != file.d)
    throw Error(ErrorKind::DimensionMismatch,
                "corpus d = " + std::to_string(file.d) + " but config d = " + std::to_string(config.d));
  Corpus corpus;
  corpus.d = file.d;
  std::unordered_map<std::string, std::size_t> slot;
  for (auto& r : file.records) {
    auto [it, fresh] = slot.try_emplace(r.image_id, corpus.images.size());
    if (fresh) corpus.images.push_back(ImageBatch{r.image_id, {}});
    corpus.images[it->second].regions.push_back(std::move(r));
  }
  const auto cap = static_cast<std::size_t>(config.n_proposals_per_image);
  for (auto& im : corpus.images) {
    std::sort(im.regions.begin(), im.regions.end(), [](const RegionRecord& a, const RegionRecord& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.region_id < b.region_id;
    });
    if (im.regions.size() > cap) im.regions.resize(cap);
    if (config.normalize_features)
      for (auto& r : im.regions) l2_normalize(r.feature);
  }
  return corpus;
}

inline Corpus ingest_corpus(const std::filesystem::path& path, const Config& config) {
  return ingest_records(read_region_file(path), config);
}

// ---------------------------------------------------------------------------
// Ground truth: one JSON object per line, no header.

inline std::vector<GroundTruthBox> parse_ground_truth(std::string_view text) {
  std::vector<GroundTruthBox> out;
  io::for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    auto j = io::parse_json_line(line_no, line);
    try {
      GroundTruthBox g;
      g.image_id = j.at("image_id").get<std::string>();
      g.box = io::box_from_json(j.at("box"));
      g.class_name = j.at("class_name").get<std::string>();
      g.known_flag = j.at("known_flag").get<bool>();
      out.push_back(std::move(g));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::Parse, "line " + std::to_string(line_no) + ": " + e.what());
    }
  });
  return out;
}

inline std::vector<GroundTruthBox> read_ground_truth(const std::filesystem::path& path) {
  return parse_ground_truth(io::read_file(path));
}

inline std::string ground_truth_to_jsonl(const std::vector<GroundTruthBox>& gt) {
  std::string out;
  for (const auto& g : gt) {
    nlohmann::json j;
    j["image_id"] = g.image_id;
    j["box"] = io::box_to_json(g.box);
    j["class_name"] = g.class_name;
    j["known_flag"] = g.known_flag;
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

inline void write_ground_truth(const std::filesystem::path& path, const std::vector<GroundTruthBox>& gt) {
  io::write_file(path, ground_truth_to_jsonl(gt));
}

}  // namespace dualmem
