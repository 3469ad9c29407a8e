// Copyright (c) 2026, The dualmem Authors
// SPDX-License-Identifier: Apache-2.0

// Domain types shared by every stage: boxes, region records, run
// configuration and the D1/D2 discovery split.

#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "dualmem/error.hpp"

namespace dualmem {

struct BoundingBox {
  float x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return double(x2) - double(x1); }
  double height() const { return double(y2) - double(y1); }
  double area() const { return width() * height(); }
  bool valid() const { return x2 > x1 && y2 > y1; }
};

/// Intersection-over-union of two boxes, in [0, 1].
inline double iou(const BoundingBox& a, const BoundingBox& b) {
  const double ix = std::min<double>(a.x2, b.x2) - std::max<double>(a.x1, b.x1);
  const double iy = std::min<double>(a.y2, b.y2) - std::max<double>(a.y1, b.y1);
  if (ix <= 0 || iy <= 0) return 0.0;
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

struct RegionRecord {
  std::string region_id;
  std::string image_id;
  BoundingBox box;
  float score = 0;
  std::vector<float> feature;
  std::optional<std::string> gt_label;
};

enum class ConsolidationMode { Naive, Merge, MergeRefine };
enum class InitMode { Null, DetScores, GtOverlap };
// How cross-firing between two working slots is measured during merge.
enum class AffinityMode { Centroid, SampleFraction };

struct Config {
  int d = 0;  // 0: taken from the corpus header
  int n_proposals_per_image = 150;
  int slot_cap = 2000;
  double semantic_prior_score = 0.9;
  double tau_semantic = 0.0;
  double tau_working = 0.7;
  double ridge_lambda = 1e-3;
  int min_images_per_slot = 5;
  double merge_edge_threshold = 0.0;
  int rounds = 2;
  std::uint64_t rng_seed = 0;
  ConsolidationMode consolidation_mode = ConsolidationMode::MergeRefine;
  InitMode init_mode = InitMode::DetScores;
  bool normalize_features = false;
  AffinityMode affinity_mode = AffinityMode::Centroid;
};

inline const char* to_string(ConsolidationMode m) {
  switch (m) {
    case ConsolidationMode::Naive: return "naive";
    case ConsolidationMode::Merge: return "merge";
    case ConsolidationMode::MergeRefine: return "merge_refine";
  }
  return "?";
}

inline const char* to_string(InitMode m) {
  switch (m) {
    case InitMode::Null: return "null";
    case InitMode::DetScores: return "det_scores";
    case InitMode::GtOverlap: return "gt_overlap";
  }
  return "?";
}

inline const char* to_string(AffinityMode m) {
  switch (m) {
    case AffinityMode::Centroid: return "centroid";
    case AffinityMode::SampleFraction: return "sample_fraction";
  }
  return "?";
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto* ws = " \t\r\n";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    throw Error(ErrorKind::Parse, "bad value for '" + std::string(key) + "': '" + std::string(text) + "'");
  return value;
}

/// Shortest round-tripping text for a double.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

inline void validate(const Config& c) {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::InvalidArgument, "config: " + m); };
  if (c.d < 0) fail("d must be >= 0");
  if (c.n_proposals_per_image < 1) fail("n_proposals_per_image must be >= 1");
  if (c.slot_cap < 1) fail("slot_cap must be >= 1");
  if (!(c.semantic_prior_score > 0 && c.semantic_prior_score <= 1)) fail("semantic_prior_score must lie in (0, 1]");
  if (!(c.tau_working >= -1 && c.tau_working <= 1)) fail("tau_working must lie in [-1, 1]");
  if (!(c.ridge_lambda > 0)) fail("ridge_lambda must be > 0");
  if (c.min_images_per_slot < 1) fail("min_images_per_slot must be >= 1");
  if (c.rounds < 1) fail("rounds must be >= 1");
  if (!std::isfinite(c.tau_semantic) || !std::isfinite(c.merge_edge_threshold))
    fail("thresholds must be finite");
}

/// Canonical `key = value` text; also the input to `config_hash`.
inline std::string to_text(const Config& c) {
  using detail::format_double;
  std::ostringstream os;
  os << "d = " << c.d << '\n'
     << "n_proposals_per_image = " << c.n_proposals_per_image << '\n'
     << "slot_cap = " << c.slot_cap << '\n'
     << "semantic_prior_score = " << format_double(c.semantic_prior_score) << '\n'
     << "tau_semantic = " << format_double(c.tau_semantic) << '\n'
     << "tau_working = " << format_double(c.tau_working) << '\n'
     << "ridge_lambda = " << format_double(c.ridge_lambda) << '\n'
     << "min_images_per_slot = " << c.min_images_per_slot << '\n'
     << "merge_edge_threshold = " << format_double(c.merge_edge_threshold) << '\n'
     << "rounds = " << c.rounds << '\n'
     << "rng_seed = " << c.rng_seed << '\n'
     << "consolidation_mode = " << to_string(c.consolidation_mode) << '\n'
     << "init_mode = " << to_string(c.init_mode) << '\n'
     << "normalize_features = " << (c.normalize_features ? "true" : "false") << '\n'
     << "affinity_mode = " << to_string(c.affinity_mode) << '\n';
  return os.str();
}

inline std::uint64_t config_hash(const Config& c) { return detail::fnv1a(to_text(c)); }

/// Applies one `key = value` assignment. Unknown keys are an error.
inline void set_config_value(Config& c, std::string_view key, std::string_view value) {
  using detail::parse_number;
  auto parse_bool = [&](std::string_view v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw Error(ErrorKind::Parse, "bad boolean for '" + std::string(key) + "'");
  };
  if (key == "d") c.d = parse_number<int>(key, value);
  else if (key == "n_proposals_per_image") c.n_proposals_per_image = parse_number<int>(key, value);
  else if (key == "slot_cap") c.slot_cap = parse_number<int>(key, value);
  else if (key == "semantic_prior_score") c.semantic_prior_score = parse_number<double>(key, value);
  else if (key == "tau_semantic") c.tau_semantic = parse_number<double>(key, value);
  else if (key == "tau_working") c.tau_working = parse_number<double>(key, value);
  else if (key == "ridge_lambda") c.ridge_lambda = parse_number<double>(key, value);
  else if (key == "min_images_per_slot") c.min_images_per_slot = parse_number<int>(key, value);
  else if (key == "merge_edge_threshold") c.merge_edge_threshold = parse_number<double>(key, value);
  else if (key == "rounds") c.rounds = parse_number<int>(key, value);
  else if (key == "rng_seed") c.rng_seed = parse_number<std::uint64_t>(key, value);
  else if (key == "consolidation_mode") {
    if (value == "naive") c.consolidation_mode = ConsolidationMode::Naive;
    else if (value == "merge") c.consolidation_mode = ConsolidationMode::Merge;
    else if (value == "merge_refine") c.consolidation_mode = ConsolidationMode::MergeRefine;
    else throw Error(ErrorKind::Parse, "unknown consolidation_mode '" + std::string(value) + "'");
  } else if (key == "init_mode") {
    if (value == "null") c.init_mode = InitMode::Null;
    else if (value == "det_scores") c.init_mode = InitMode::DetScores;
    else if (value == "gt_overlap") c.init_mode = InitMode::GtOverlap;
    else throw Error(ErrorKind::Parse, "unknown init_mode '" + std::string(value) + "'");
  } else if (key == "normalize_features") c.normalize_features = parse_bool(value);
  else if (key == "affinity_mode") {
    if (value == "centroid") c.affinity_mode = AffinityMode::Centroid;
    else if (value == "sample_fraction") c.affinity_mode = AffinityMode::SampleFraction;
    else throw Error(ErrorKind::Parse, "unknown affinity_mode '" + std::string(value) + "'");
  } else {
    throw Error(ErrorKind::Parse, "unknown config key '" + std::string(key) + "'");
  }
}

/// Parses flat `key = value` text. Blank lines and `#` comments are ignored.
inline Config parse_config(std::string_view text) {
  Config c;
  std::size_t line_no = 0;
  while (!text.empty()) {
    auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw Error(ErrorKind::Parse, "config line " + std::to_string(line_no) + ": expected key = value");
    set_config_value(c, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  validate(c);
  return c;
}

inline Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

// ---------------------------------------------------------------------------
// Deterministic randomness. std distributions are implementation-defined, so
// everything that must be reproducible across toolchains goes through these.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Uniform integer in [0, bound) by rejection; bound > 0.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform_unit(std::mt19937_64& rng) { return double(rng() >> 11) * 0x1.0p-53; }

/// Standard normal via Box-Muller (one draw per call, the pair's partner is discarded).
inline double standard_normal(std::mt19937_64& rng) {
  double u1 = 0;
  while (u1 <= 0) u1 = uniform_unit(rng);
  const double u2 = uniform_unit(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

template <typename T>
void deterministic_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    auto j = static_cast<std::size_t>(uniform_below(rng, i));
    std::swap(v[i - 1], v[j]);
  }
}

// ---------------------------------------------------------------------------

enum class SplitSide { D1, D2 };

struct DatasetSplit {
  std::vector<std::string> d1;
  std::vector<std::string> d2;

  const std::vector<std::string>& side(SplitSide s) const { return s == SplitSide::D1 ? d1 : d2; }
};

/// Seeded 50/50 partition of the image ids; D1 takes the extra image when
/// the count is odd.
inline DatasetSplit split_dataset(const std::vector<std::string>& image_ids, std::uint64_t seed) {
  if (image_ids.empty()) throw Error(ErrorKind::EmptyInput, "split_dataset: no image ids");
  std::unordered_set<std::string> seen;
  for (const auto& id : image_ids)
    if (!seen.insert(id).second) throw Error(ErrorKind::DuplicateId, "split_dataset: duplicate image id '" + id + "'");

  std::vector<std::string> order = image_ids;
  std::mt19937_64 rng(splitmix64(seed));
  deterministic_shuffle(order, rng);

  const std::size_t n1 = (order.size() + 1) / 2;
  DatasetSplit split;
  split.d1.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n1));
  split.d2.assign(order.begin() + static_cast<std::ptrdiff_t>(n1), order.end());
  return split;
}

}  // namespace dualmem
