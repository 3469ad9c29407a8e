// Copyright (c) 2026, The dualmem Authors
// SPDX-License-Identifier: Apache-2.0

// The dual memory. Semantic slots hold closed-form LDA classifiers for known
// and discovered categories; working slots hold centroids of candidate
// categories. Retrieval checks semantic memory first, then working memory,
// and otherwise opens a new working slot while the combined cap allows it.

#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dualmem/core.hpp"
#include "dualmem/corpus_io.hpp"
#include "dualmem/stats.hpp"

namespace dualmem {

struct Sample {
  std::string image_id;
  std::vector<float> feature;
};

struct SemanticSlot {
  int slot_id = 0;
  std::string label;
  Vec mu_pos;
  std::uint64_t pi_pos = 0;
  LinearClassifier clf;
  std::vector<std::string> members;
};

struct WorkingSlot {
  int slot_id = 0;
  Vec mu_c;
  std::uint64_t pi = 0;
  std::vector<std::string> members;
};

struct DecisionCounters {
  std::uint64_t regions_seen = 0;  // regions that went through retrieval
  std::uint64_t known_matches = 0;
  std::uint64_t working_matches = 0;
  std::uint64_t new_slots = 0;
  std::uint64_t rejected = 0;
  std::uint64_t already_assigned = 0;  // skipped: owned by a semantic slot already

  std::uint64_t accepted() const { return known_matches + working_matches + new_slots; }
};

struct DualMemory {
  Config config;
  std::shared_ptr<const BackgroundStats> bg;
  std::vector<SemanticSlot> semantic;  // ascending slot_id
  std::vector<WorkingSlot> working;    // ascending slot_id
  std::unordered_map<std::string, Sample> samples;
  std::unordered_map<std::string, int> owner;  // region_id -> slot_id currently holding it
  int next_slot_id = 1;
  DecisionCounters counters;

  int dim() const { return bg->dim(); }
  std::size_t total_slots() const { return semantic.size() + working.size(); }
  bool at_capacity() const { return total_slots() >= static_cast<std::size_t>(config.slot_cap); }

  SemanticSlot* find_semantic(int id) {
    auto it = std::lower_bound(semantic.begin(), semantic.end(), id,
                               [](const SemanticSlot& s, int v) { return s.slot_id < v; });
    return it != semantic.end() && it->slot_id == id ? &*it : nullptr;
  }
  WorkingSlot* find_working(int id) {
    auto it = std::lower_bound(working.begin(), working.end(), id,
                               [](const WorkingSlot& s, int v) { return s.slot_id < v; });
    return it != working.end() && it->slot_id == id ? &*it : nullptr;
  }
  const SemanticSlot* find_semantic(int id) const { return const_cast<DualMemory*>(this)->find_semantic(id); }
  const WorkingSlot* find_working(int id) const { return const_cast<DualMemory*>(this)->find_working(id); }

  Vec feature_of(const std::string& region_id) const { return to_vec(samples.at(region_id).feature); }
};

inline DualMemory make_memory(const Config& config, std::shared_ptr<const BackgroundStats> bg) {
  validate(config);
  if (!bg) throw Error(ErrorKind::InvalidArgument, "make_memory: background statistics required");
  if (config.d != 0 && config.d != bg->dim())
    throw Error(ErrorKind::DimensionMismatch, "config d = " + std::to_string(config.d) +
                                                  " but background d = " + std::to_string(bg->dim()));
  DualMemory mem;
  mem.config = config;
  mem.bg = std::move(bg);
  return mem;
}

/// Number of distinct images among a member list.
inline std::size_t image_span(const DualMemory& mem, const std::vector<std::string>& members) {
  std::set<std::string_view> images;
  for (const auto& id : members) images.insert(mem.samples.at(id).image_id);
  return images.size();
}

/// Arithmetic mean of member features.
inline Vec member_mean(const DualMemory& mem, const std::vector<std::string>& members) {
  Vec sum = Vec::Zero(mem.dim());
  for (const auto& id : members) sum += mem.feature_of(id);
  return members.empty() ? sum : Vec(sum / double(members.size()));
}

// ---------------------------------------------------------------------------
// Semantic priors

struct SemanticPrior {
  std::string label;
  std::vector<RegionRecord> regions;
};

namespace detail {

inline std::vector<SemanticPrior> group_priors(std::map<std::string, std::vector<RegionRecord>> by_label,
                                               const std::vector<std::string>& known_labels) {
  for (const auto& l : known_labels) by_label.try_emplace(l);
  std::vector<SemanticPrior> out;
  for (auto& [label, regions] : by_label) out.push_back({label, std::move(regions)});
  return out;
}

}  // namespace detail

/// Detector-score priors: labelled records with score > threshold. Labels in
/// `known_labels` that end up without records are kept as empty entries.
inline std::vector<SemanticPrior> select_det_score_priors(const std::vector<RegionRecord>& records, double threshold,
                                                          const std::vector<std::string>& known_labels = {}) {
  std::map<std::string, std::vector<RegionRecord>> by_label;
  for (const auto& r : records)
    if (r.gt_label && r.score > threshold) by_label[*r.gt_label].push_back(r);
  return detail::group_priors(std::move(by_label), known_labels);
}

/// Ground-truth-overlap priors: records whose best known-class ground-truth
/// box in the same image has IoU > iou_threshold, labelled with that class.
inline std::vector<SemanticPrior> select_gt_overlap_priors(const std::vector<RegionRecord>& records,
                                                           const std::vector<GroundTruthBox>& gt,
                                                           double iou_threshold = 0.5) {
  std::unordered_map<std::string, std::vector<const GroundTruthBox*>> by_image;
  std::vector<std::string> known;
  for (const auto& g : gt)
    if (g.known_flag) {
      by_image[g.image_id].push_back(&g);
      known.push_back(g.class_name);
    }
  std::sort(known.begin(), known.end());
  known.erase(std::unique(known.begin(), known.end()), known.end());

  std::map<std::string, std::vector<RegionRecord>> by_label;
  for (const auto& r : records) {
    auto it = by_image.find(r.image_id);
    if (it == by_image.end()) continue;
    double best = 0;
    const GroundTruthBox* hit = nullptr;
    for (const auto* g : it->second) {
      double v = iou(r.box, g->box);
      if (v > best) best = v, hit = g;
    }
    if (hit && best > iou_threshold) by_label[hit->class_name].push_back(r);
  }
  return detail::group_priors(std::move(by_label), known);
}

/// Builds a memory whose semantic side holds one slot per prior class (null
/// mode ignores the priors) and whose working side is empty.
inline DualMemory init_semantic(const Config& config, std::shared_ptr<const BackgroundStats> bg,
                                const std::vector<SemanticPrior>& priors, InitMode mode) {
  DualMemory mem = make_memory(config, std::move(bg));
  if (mode == InitMode::Null) return mem;
  for (const auto& prior : priors) {
    if (prior.regions.empty()) {
      warn("init_semantic: class '" + prior.label + "' has no qualifying priors, skipped");
      continue;
    }
    SemanticSlot slot;
    slot.slot_id = mem.next_slot_id++;
    slot.label = prior.label;
    Vec sum = Vec::Zero(mem.dim());
    for (const auto& r : prior.regions) {
      if (static_cast<int>(r.feature.size()) != mem.dim())
        throw Error(ErrorKind::DimensionMismatch, "init_semantic: prior '" + r.region_id + "' has wrong dimension");
      if (!mem.samples.emplace(r.region_id, Sample{r.image_id, r.feature}).second)
        throw Error(ErrorKind::DuplicateId, "init_semantic: prior region '" + r.region_id + "' appears twice");
      mem.owner[r.region_id] = slot.slot_id;
      slot.members.push_back(r.region_id);
      sum += to_vec(r.feature);
    }
    slot.pi_pos = slot.members.size();
    slot.mu_pos = sum / double(slot.pi_pos);
    slot.clf = lda_train(slot.mu_pos, slot.pi_pos, *mem.bg);
    mem.semantic.push_back(std::move(slot));
  }
  return mem;
}

// ---------------------------------------------------------------------------
// Retrieval

enum class DecisionKind { KnownMatch, WorkingMatch, NewSlot, Rejected };

inline const char* to_string(DecisionKind k) {
  switch (k) {
    case DecisionKind::KnownMatch: return "known_match";
    case DecisionKind::WorkingMatch: return "working_match";
    case DecisionKind::NewSlot: return "new_slot";
    case DecisionKind::Rejected: return "rejected";
  }
  return "?";
}

struct RetrievalDecision {
  DecisionKind kind = DecisionKind::NewSlot;
  std::optional<int> slot_id;
  // KnownMatch: classifier score. Otherwise the best working cosine, or -1
  // when working memory is empty.
  double score = -1.0;

  friend bool operator==(const RetrievalDecision&, const RetrievalDecision&) = default;
};

/// Best semantic slot by classifier score (ties to the lowest slot id).
inline std::optional<std::pair<int, double>> best_semantic(const DualMemory& mem, const Vec& f) {
  std::optional<std::pair<int, double>> best;
  for (const auto& s : mem.semantic) {
    const double v = lda_score(s.clf, f);
    if (!best || v > best->second) best = {s.slot_id, v};
  }
  return best;
}

inline RetrievalDecision retrieve(const DualMemory& mem, const Vec& f) {
  if (f.size() != mem.dim()) throw Error(ErrorKind::DimensionMismatch, "retrieve: feature dimension mismatch");
  if (!f.allFinite()) throw Error(ErrorKind::NonFinite, "retrieve: non-finite feature");

  if (auto sem = best_semantic(mem, f); sem && sem->second >= mem.config.tau_semantic)
    return {DecisionKind::KnownMatch, sem->first, sem->second};

  std::optional<std::pair<int, double>> best;
  for (const auto& w : mem.working) {
    const double c = cosine_similarity(f, w.mu_c);
    if (!best || c > best->second) best = {w.slot_id, c};
  }
  if (best && best->second >= mem.config.tau_working) return {DecisionKind::WorkingMatch, best->first, best->second};

  const double score = best ? best->second : -1.0;
  if (mem.at_capacity()) return {DecisionKind::Rejected, std::nullopt, score};
  return {DecisionKind::NewSlot, std::nullopt, score};
}

// ---------------------------------------------------------------------------
// Updates

inline void add_to_semantic(DualMemory& mem, SemanticSlot& slot, const std::string& region_id, const Vec& f) {
  const double n = double(slot.pi_pos);
  slot.mu_pos = (n * slot.mu_pos + f) / (n + 1.0);
  slot.pi_pos += 1;
  slot.members.push_back(region_id);
  slot.clf = lda_train(slot.mu_pos, slot.pi_pos, *mem.bg);
  mem.owner[region_id] = slot.slot_id;
}

inline void add_to_working(DualMemory& mem, WorkingSlot& slot, const std::string& region_id, const Vec& f) {
  slot.pi += 1;
  slot.mu_c += (f - slot.mu_c) / double(slot.pi);
  slot.members.push_back(region_id);
  mem.owner[region_id] = slot.slot_id;
}

inline void store_sample(DualMemory& mem, const RegionRecord& region) {
  mem.samples.insert_or_assign(region.region_id, Sample{region.image_id, region.feature});
}

inline void apply_decision(DualMemory& mem, const RetrievalDecision& decision, const RegionRecord& region) {
  if (mem.owner.count(region.region_id))
    throw Error(ErrorKind::DuplicateId, "apply_decision: region '" + region.region_id + "' is already assigned");
  const Vec f = to_vec(region.feature);
  switch (decision.kind) {
    case DecisionKind::KnownMatch: {
      auto* slot = decision.slot_id ? mem.find_semantic(*decision.slot_id) : nullptr;
      if (!slot) throw Error(ErrorKind::StaleDecision, "apply_decision: semantic slot no longer exists");
      store_sample(mem, region);
      add_to_semantic(mem, *slot, region.region_id, f);
      ++mem.counters.known_matches;
      break;
    }
    case DecisionKind::WorkingMatch: {
      auto* slot = decision.slot_id ? mem.find_working(*decision.slot_id) : nullptr;
      if (!slot) throw Error(ErrorKind::StaleDecision, "apply_decision: working slot no longer exists");
      store_sample(mem, region);
      add_to_working(mem, *slot, region.region_id, f);
      ++mem.counters.working_matches;
      break;
    }
    case DecisionKind::NewSlot: {
      if (mem.at_capacity()) throw Error(ErrorKind::StaleDecision, "apply_decision: slot cap reached since retrieval");
      store_sample(mem, region);
      WorkingSlot slot;
      slot.slot_id = mem.next_slot_id++;
      slot.mu_c = f;
      slot.pi = 1;
      slot.members.push_back(region.region_id);
      mem.owner[region.region_id] = slot.slot_id;
      mem.working.push_back(std::move(slot));
      ++mem.counters.new_slots;
      break;
    }
    case DecisionKind::Rejected:
      ++mem.counters.rejected;
      break;
  }
  ++mem.counters.regions_seen;
}

/// Streams one image's regions through retrieval in batch order. Regions
/// already held by a slot are skipped and counted.
inline void process_image(DualMemory& mem, std::span<const RegionRecord> batch) {
  for (const auto& region : batch) {
    if (mem.owner.count(region.region_id)) {
      ++mem.counters.already_assigned;
      continue;
    }
    const auto decision = retrieve(mem, to_vec(region.feature));
    apply_decision(mem, decision, region);
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::string checkpoint_to_bytes(const DualMemory& mem) {
  using namespace io;
  std::string out = "DMCK";
  put_u32(out, kCheckpointVersion);
  put_u64(out, config_hash(mem.config));
  put_u64(out, mem.bg->fingerprint());
  put_u32(out, static_cast<std::uint32_t>(mem.dim()));
  put_u32(out, static_cast<std::uint32_t>(mem.next_slot_id));
  const auto& c = mem.counters;
  for (auto v : {c.regions_seen, c.known_matches, c.working_matches, c.new_slots, c.rejected, c.already_assigned}) put_u64(out, v);
  auto put_vec = [&](const Vec& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) put_f64(out, v[i]);
  };
  auto put_members = [&](const std::vector<std::string>& m) {
    put_u32(out, static_cast<std::uint32_t>(m.size()));
    for (const auto& id : m) put_str(out, id);
  };
  put_u32(out, static_cast<std::uint32_t>(mem.semantic.size()));
  for (const auto& s : mem.semantic) {
    put_u32(out, static_cast<std::uint32_t>(s.slot_id));
    put_str(out, s.label);
    put_vec(s.mu_pos);
    put_u64(out, s.pi_pos);
    put_vec(s.clf.w);
    put_f64(out, s.clf.b);
    put_members(s.members);
  }
  put_u32(out, static_cast<std::uint32_t>(mem.working.size()));
  for (const auto& w : mem.working) {
    put_u32(out, static_cast<std::uint32_t>(w.slot_id));
    put_vec(w.mu_c);
    put_u64(out, w.pi);
    put_members(w.members);
  }
  std::vector<const std::pair<const std::string, Sample>*> sorted;
  sorted.reserve(mem.samples.size());
  for (const auto& kv : mem.samples) sorted.push_back(&kv);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->first < b->first; });
  put_u64(out, sorted.size());
  for (const auto* kv : sorted) {
    put_str(out, kv->first);
    put_str(out, kv->second.image_id);
    for (float f : kv->second.feature) put_f32(out, f);
  }
  return out;
}

/// Restores a checkpoint. `config` and `bg` must be the ones it was written
/// with (both are pinned by hash).
inline DualMemory checkpoint_from_bytes(std::string_view bytes, const Config& config,
                                        std::shared_ptr<const BackgroundStats> bg) {
  using io::ByteReader;
  ByteReader rd(bytes);
  if (rd.take(4) != "DMCK") throw Error(ErrorKind::Format, "bad magic, expected DMCK");
  if (auto v = rd.u32(); v != kCheckpointVersion) throw Error(ErrorKind::Format, "unsupported checkpoint version " + std::to_string(v));
  if (rd.u64() != config_hash(config)) throw Error(ErrorKind::Format, "checkpoint was written with a different config");
  if (rd.u64() != bg->fingerprint()) throw Error(ErrorKind::Format, "checkpoint was written with different background statistics");
  DualMemory mem = make_memory(config, std::move(bg));
  const auto d = Eigen::Index(rd.u32());
  if (d != mem.dim()) throw Error(ErrorKind::DimensionMismatch, "checkpoint dimension mismatch");
  mem.next_slot_id = static_cast<int>(rd.u32());
  auto& c = mem.counters;
  for (auto* v : {&c.regions_seen, &c.known_matches, &c.working_matches, &c.new_slots, &c.rejected, &c.already_assigned}) *v = rd.u64();
  auto get_vec = [&] {
    Vec v(d);
    for (Eigen::Index i = 0; i < d; ++i) v[i] = rd.f64();
    return v;
  };
  auto get_members = [&] {
    std::vector<std::string> m(rd.u32());
    for (auto& id : m) id = rd.str();
    return m;
  };
  mem.semantic.resize(rd.u32());
  for (auto& s : mem.semantic) {
    s.slot_id = static_cast<int>(rd.u32());
    s.label = rd.str();
    s.mu_pos = get_vec();
    s.pi_pos = rd.u64();
    s.clf.w = get_vec();
    s.clf.b = rd.f64();
    s.members = get_members();
    for (const auto& id : s.members) mem.owner[id] = s.slot_id;
  }
  mem.working.resize(rd.u32());
  for (auto& w : mem.working) {
    w.slot_id = static_cast<int>(rd.u32());
    w.mu_c = get_vec();
    w.pi = rd.u64();
    w.members = get_members();
    for (const auto& id : w.members) mem.owner[id] = w.slot_id;
  }
  const auto n_samples = rd.u64();
  mem.samples.reserve(n_samples);
  for (std::uint64_t i = 0; i < n_samples; ++i) {
    auto id = rd.str();
    Sample s;
    s.image_id = rd.str();
    s.feature.resize(std::size_t(d));
    for (auto& f : s.feature) f = rd.f32();
    mem.samples.emplace(std::move(id), std::move(s));
  }
  if (!rd.done()) throw Error(ErrorKind::Format, "checkpoint: trailing bytes");
  return mem;
}

}  // namespace dualmem
