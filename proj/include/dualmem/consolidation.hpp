// Copyright (c) 2026, The dualmem Authors
// SPDX-License-Identifier: Apache-2.0

// Memory consolidation: promote working slots into semantic memory, with
// optional affinity-graph merging of fragmented slots and a refine pass that
// drops samples their own classifier does not fire on.

#pragma once

#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dualmem/memory.hpp"

namespace dualmem {

struct AffinityEdge {
  int i = 0;
  int j = 0;  // i < j
  double weight = 0;
};

struct AffinityGraph {
  std::vector<int> nodes;  // working slot ids, ascending
  std::vector<AffinityEdge> edges;
};

using SlotClassifiers = std::map<int, LinearClassifier>;

/// LDA classifier per working slot, trained on its centroid and count.
inline SlotClassifiers train_slot_classifiers(const DualMemory& mem) {
  SlotClassifiers out;
  for (const auto& w : mem.working) out.emplace(w.slot_id, lda_train(w.mu_c, w.pi, *mem.bg));
  return out;
}

namespace detail {

/// Fraction of `slot`'s members on which `clf` fires (score >= 0).
inline double firing_fraction(const DualMemory& mem, const LinearClassifier& clf, const WorkingSlot& slot) {
  if (slot.members.empty()) return 0.0;
  std::size_t fired = 0;
  for (const auto& id : slot.members)
    if (lda_score(clf, mem.feature_of(id)) >= 0) ++fired;
  return double(fired) / double(slot.members.size());
}

}  // namespace detail

/// Symmetric cross-firing affinity between working slots. In centroid mode
/// weight(i,j) = (score_i(mu_j) + score_j(mu_i)) / 2; in sample-fraction mode
/// the scores are replaced by the fraction of the other slot's members each
/// classifier fires on. Only edges with weight > merge_edge_threshold are kept.
inline AffinityGraph build_affinity_graph(const DualMemory& mem, const SlotClassifiers& classifiers) {
  AffinityGraph g;
  for (const auto& w : mem.working) g.nodes.push_back(w.slot_id);
  const auto& ws = mem.working;
  for (std::size_t a = 0; a < ws.size(); ++a) {
    const auto& ca = classifiers.at(ws[a].slot_id);
    for (std::size_t b = a + 1; b < ws.size(); ++b) {
      const auto& cb = classifiers.at(ws[b].slot_id);
      double weight;
      if (mem.config.affinity_mode == AffinityMode::Centroid)
        weight = 0.5 * (lda_score(ca, ws[b].mu_c) + lda_score(cb, ws[a].mu_c));
      else
        weight = 0.5 * (detail::firing_fraction(mem, ca, ws[b]) + detail::firing_fraction(mem, cb, ws[a]));
      if (weight > mem.config.merge_edge_threshold) g.edges.push_back({ws[a].slot_id, ws[b].slot_id, weight});
    }
  }
  return g;
}

/// Connected components of the graph; each component of two or more slots is
/// pooled into its smallest slot id. Returns the number of slots merged away.
inline std::size_t merge_components(DualMemory& mem, const AffinityGraph& graph) {
  std::map<int, std::size_t> index;
  for (std::size_t k = 0; k < graph.nodes.size(); ++k) index[graph.nodes[k]] = k;
  std::vector<std::size_t> parent(graph.nodes.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& e : graph.edges) {
    auto ra = find(index.at(e.i)), rb = find(index.at(e.j));
    if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);  // root = smallest node index = smallest id
  }

  std::map<std::size_t, std::vector<int>> components;
  for (std::size_t k = 0; k < graph.nodes.size(); ++k) components[find(k)].push_back(graph.nodes[k]);

  std::size_t merged_away = 0;
  std::vector<int> removed;
  for (auto& [root, ids] : components) {
    if (ids.size() < 2) continue;
    auto* survivor = mem.find_working(ids.front());
    for (std::size_t k = 1; k < ids.size(); ++k) {
      auto* other = mem.find_working(ids[k]);
      for (auto& id : other->members) {
        mem.owner[id] = survivor->slot_id;
        survivor->members.push_back(std::move(id));
      }
      other->members.clear();
      removed.push_back(other->slot_id);
      ++merged_away;
    }
    survivor->pi = survivor->members.size();
    survivor->mu_c = member_mean(mem, survivor->members);
  }
  std::erase_if(mem.working, [&](const WorkingSlot& w) {
    return std::find(removed.begin(), removed.end(), w.slot_id) != removed.end();
  });
  return merged_away;
}

struct RefineResult {
  std::size_t samples_dropped = 0;
  std::size_t slots_deleted = 0;
};

/// One pass: every member x of slot s with w_s^T x + b_s < 0 is released.
/// Centroids are recomputed and emptied slots deleted.
inline RefineResult refine_slots(DualMemory& mem, const SlotClassifiers& classifiers) {
  RefineResult result;
  for (auto& w : mem.working) {
    const auto& clf = classifiers.at(w.slot_id);
    std::vector<std::string> kept;
    kept.reserve(w.members.size());
    for (auto& id : w.members) {
      if (lda_score(clf, mem.feature_of(id)) >= 0) {
        kept.push_back(std::move(id));
      } else {
        mem.owner.erase(id);
        ++result.samples_dropped;
      }
    }
    w.members = std::move(kept);
    w.pi = w.members.size();
    if (w.pi > 0) w.mu_c = member_mean(mem, w.members);
  }
  result.slots_deleted = static_cast<std::size_t>(std::erase_if(mem.working, [](const WorkingSlot& w) { return w.pi == 0; }));
  return result;
}

struct ConsolidationReport {
  int round = 0;
  ConsolidationMode mode = ConsolidationMode::Naive;
  std::size_t working_before = 0;
  std::size_t slots_after_merge = 0;
  std::size_t slots_merged_away = 0;
  std::size_t samples_dropped_by_refine = 0;
  std::size_t slots_deleted_by_refine = 0;
  std::size_t slots_discarded = 0;  // failed the min-image filter
  std::vector<std::string> transferred;  // labels of new semantic slots

  nlohmann::json to_json() const {
    return {{"round", round},
            {"mode", to_string(mode)},
            {"working_before", working_before},
            {"slots_after_merge", slots_after_merge},
            {"slots_merged_away", slots_merged_away},
            {"samples_dropped_by_refine", samples_dropped_by_refine},
            {"slots_deleted_by_refine", slots_deleted_by_refine},
            {"slots_discarded_min_images", slots_discarded},
            {"slots_transferred", transferred.size()},
            {"transferred_labels", transferred}};
  }
};

inline std::string discovered_label(int round, std::size_t seq) {
  return "disc_" + std::to_string(round) + "_" + std::to_string(seq);
}

/// Moves working slots spanning at least `min_images_per_slot` images into
/// semantic memory and resets working memory to empty.
inline ConsolidationReport consolidate(DualMemory& mem, int round) {
  ConsolidationReport report;
  report.round = round;
  report.mode = mem.config.consolidation_mode;
  report.working_before = mem.working.size();

  if (!mem.working.empty() && report.mode != ConsolidationMode::Naive) {
    auto classifiers = train_slot_classifiers(mem);
    report.slots_merged_away = merge_components(mem, build_affinity_graph(mem, classifiers));
    if (report.mode == ConsolidationMode::MergeRefine) {
      auto refined = refine_slots(mem, train_slot_classifiers(mem));
      report.samples_dropped_by_refine = refined.samples_dropped;
      report.slots_deleted_by_refine = refined.slots_deleted;
    }
  }
  report.slots_after_merge = report.working_before - report.slots_merged_away;

  const auto min_images = static_cast<std::size_t>(mem.config.min_images_per_slot);
  for (auto& w : mem.working) {
    if (image_span(mem, w.members) < min_images) {
      for (const auto& id : w.members) mem.owner.erase(id);
      ++report.slots_discarded;
      continue;
    }
    SemanticSlot s;
    s.slot_id = w.slot_id;
    s.label = discovered_label(round, report.transferred.size());
    s.mu_pos = w.mu_c;
    s.pi_pos = w.pi;
    s.clf = lda_train(s.mu_pos, s.pi_pos, *mem.bg);
    s.members = std::move(w.members);
    for (const auto& id : s.members) mem.owner[id] = s.slot_id;
    report.transferred.push_back(s.label);
    mem.semantic.push_back(std::move(s));
  }
  mem.working.clear();
  return report;
}

}  // namespace dualmem
