// Copyright (c) 2026, The dualmem Authors
// SPDX-License-Identifier: Apache-2.0

// Never-ending discovery over a fixed corpus: stream the active split through
// the memory, consolidate, mine the other split with semantic classifiers,
// swap, repeat.

#pragma once

#include <functional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dualmem/consolidation.hpp"

namespace dualmem {

struct PipelineStats {
  std::uint64_t mined = 0;  // semantic updates made while mining the inactive split
  std::uint64_t slots_merged_away = 0;
  std::uint64_t samples_dropped_by_refine = 0;
  std::uint64_t slots_deleted_by_refine = 0;
  std::uint64_t slots_discarded = 0;
  std::uint64_t slots_transferred = 0;
  std::uint64_t consolidations = 0;
};

struct RoundState {
  int round_index = 1;  // the round about to run
  SplitSide active = SplitSide::D1;
  DualMemory mem;
  PipelineStats stats;
};

inline const char* to_string(SplitSide s) { return s == SplitSide::D1 ? "D1" : "D2"; }

/// Updates semantic slots with regions of the given images that score at or
/// above tau_semantic. Never touches working memory or slot counts.
inline std::uint64_t mine_with_semantic(DualMemory& mem, const Corpus& corpus,
                                        const std::unordered_map<std::string, std::size_t>& index,
                                        const std::vector<std::string>& image_ids) {
  std::uint64_t mined = 0;
  for (const auto& image_id : image_ids) {
    for (const auto& region : corpus.images[index.at(image_id)].regions) {
      if (mem.owner.count(region.region_id)) continue;
      const Vec f = to_vec(region.feature);
      auto best = best_semantic(mem, f);
      if (!best || best->second < mem.config.tau_semantic) continue;
      store_sample(mem, region);
      add_to_semantic(mem, *mem.find_semantic(best->first), region.region_id, f);
      ++mined;
    }
  }
  return mined;
}

/// Runs one round and returns its consolidation report; `state` advances to
/// the next round with the splits swapped.
inline ConsolidationReport run_discovery_round(RoundState& state, const Corpus& corpus, const DatasetSplit& split) {
  const auto index = corpus.index();
  const SplitSide inactive = state.active == SplitSide::D1 ? SplitSide::D2 : SplitSide::D1;

  for (const auto& image_id : split.side(state.active))
    process_image(state.mem, corpus.images[index.at(image_id)].regions);

  auto report = consolidate(state.mem, state.round_index);
  state.stats.slots_merged_away += report.slots_merged_away;
  state.stats.samples_dropped_by_refine += report.samples_dropped_by_refine;
  state.stats.slots_deleted_by_refine += report.slots_deleted_by_refine;
  state.stats.slots_discarded += report.slots_discarded;
  state.stats.slots_transferred += report.transferred.size();
  ++state.stats.consolidations;

  state.stats.mined += mine_with_semantic(state.mem, corpus, index, split.side(inactive));

  state.active = inactive;
  ++state.round_index;
  return report;
}

using Assignment = std::pair<std::string, std::string>;  // region_id, slot label
inline constexpr const char* kUnassigned = "unassigned";

/// One entry per ingested region, in corpus order.
inline std::vector<Assignment> assignments_of(const DualMemory& mem, const Corpus& corpus) {
  std::unordered_map<int, const std::string*> labels;
  for (const auto& s : mem.semantic) labels.emplace(s.slot_id, &s.label);
  std::vector<Assignment> out;
  out.reserve(corpus.region_count());
  for (const auto& im : corpus.images)
    for (const auto& r : im.regions) {
      auto it = mem.owner.find(r.region_id);
      auto lab = it == mem.owner.end() ? labels.end() : labels.find(it->second);
      out.emplace_back(r.region_id, lab == labels.end() ? std::string(kUnassigned) : *lab->second);
    }
  return out;
}

struct DiscoveryResult {
  RoundState state;
  DatasetSplit split;
  std::vector<ConsolidationReport> reports;
  std::vector<Assignment> assignments;
};

/// Called after every round with the advanced state and that round's report.
using RoundObserver = std::function<void(const RoundState&, const ConsolidationReport&)>;

inline DiscoveryResult run_discovery(const Config& config, const Corpus& corpus,
                                     std::shared_ptr<const BackgroundStats> bg,
                                     const std::vector<SemanticPrior>& priors, const RoundObserver& observer = {}) {
  validate(config);
  if (config.d != 0 && config.d != corpus.d)
    throw Error(ErrorKind::DimensionMismatch, "config d does not match corpus d");
  if (bg->dim() != corpus.d) throw Error(ErrorKind::DimensionMismatch, "background d does not match corpus d");

  DiscoveryResult result;
  result.state.mem = init_semantic(config, std::move(bg), priors, config.init_mode);
  if (!corpus.images.empty()) result.split = split_dataset(corpus.image_ids(), config.rng_seed);

  for (int r = 0; r < config.rounds; ++r) {
    result.reports.push_back(run_discovery_round(result.state, corpus, result.split));
    if (observer) observer(result.state, result.reports.back());
  }
  result.assignments = assignments_of(result.state.mem, corpus);
  return result;
}

inline std::string assignments_to_tsv(const std::vector<Assignment>& assignments) {
  std::string out;
  for (const auto& [region, label] : assignments) {
    out += region;
    out.push_back('\t');
    out += label;
    out.push_back('\n');
  }
  return out;
}

inline std::vector<Assignment> parse_assignments(std::string_view text) {
  std::vector<Assignment> out;
  io::for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    auto tab = line.find('\t');
    if (tab == std::string_view::npos)
      throw Error(ErrorKind::Parse, "assignments line " + std::to_string(line_no) + ": expected region_id<TAB>label");
    out.emplace_back(std::string(line.substr(0, tab)), std::string(line.substr(tab + 1)));
  });
  return out;
}

inline std::string stats_to_text(const RoundState& state) {
  const auto& c = state.mem.counters;
  const auto& s = state.stats;
  std::size_t discovered = 0;
  for (const auto& slot : state.mem.semantic)
    if (slot.label.rfind("disc_", 0) == 0) ++discovered;
  std::ostringstream os;
  os << "rounds_completed = " << state.round_index - 1 << '\n'
     << "regions_seen = " << c.regions_seen << '\n'
     << "accepted = " << c.accepted() << '\n'
     << "known_matches = " << c.known_matches << '\n'
     << "working_matches = " << c.working_matches << '\n'
     << "new_slots = " << c.new_slots << '\n'
     << "rejected = " << c.rejected << '\n'
     << "already_assigned = " << c.already_assigned << '\n'
     << "mined = " << s.mined << '\n'
     << "slots_merged_away = " << s.slots_merged_away << '\n'
     << "samples_dropped_by_refine = " << s.samples_dropped_by_refine << '\n'
     << "slots_deleted_by_refine = " << s.slots_deleted_by_refine << '\n'
     << "slots_discarded = " << s.slots_discarded << '\n'
     << "slots_transferred = " << s.slots_transferred << '\n'
     << "consolidations = " << s.consolidations << '\n'
     << "n_semantic_slots = " << state.mem.semantic.size() << '\n'
     << "n_discovered_slots = " << discovered << '\n';
  return os.str();
}

/// Parses `key = value` lines into a map (used for stats.txt and metrics).
inline std::map<std::string, std::string> parse_key_values(std::string_view text) {
  std::map<std::string, std::string> out;
  io::for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw Error(ErrorKind::Parse, "line " + std::to_string(line_no) + ": expected key = value");
    out[std::string(detail::trim(line.substr(0, eq)))] = std::string(detail::trim(line.substr(eq + 1)));
  });
  return out;
}

}  // namespace dualmem
