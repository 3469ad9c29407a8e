// Copyright (c) 2026, The dualmem Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include "support.hpp"

using namespace dualmem;
using dualmem::testing::identity_bg;
using dualmem::testing::region;
using dualmem::testing::small_config;

namespace {

struct SmallRun {
  SynthCorpus synth;
  Corpus corpus;
  std::shared_ptr<const BackgroundStats> bg;
  std::vector<SemanticPrior> priors;
};

SmallRun small_run(std::uint64_t seed = 4) {
  SynthSpec spec;
  spec.d = 8;
  spec.n_known = 2;
  spec.n_unknown = 3;
  spec.images = 80;
  spec.prior_per_class = 10;
  spec.low_score_priors_per_class = 2;
  spec.seed = seed;
  SmallRun r;
  r.synth = generate(spec);
  r.corpus = ingest_records(r.synth.corpus, Config{});
  MomentAccumulator acc(spec.d);
  for (const auto& rec : r.synth.corpus.records) acc.add(rec.feature);
  r.bg = std::make_shared<const BackgroundStats>(finalize_background(acc, 1e-3));
  r.priors = select_det_score_priors(r.synth.priors.records, 0.9);
  return r;
}

}  // namespace

TEST_CASE("empty corpus only advances the round counter") {
  Config cfg = small_config(3);
  cfg.rounds = 1;
  Corpus empty;
  empty.d = 3;
  auto res = run_discovery(cfg, empty, identity_bg(3), {});
  CHECK(res.state.round_index == 2);
  CHECK(res.state.mem.semantic.empty());
  CHECK(res.state.mem.working.empty());
  CHECK(res.state.mem.counters.regions_seen == 0);
  CHECK(res.reports.size() == 1);
  CHECK(res.assignments.empty());
}

TEST_CASE("one round consolidates exactly once") {
  auto run = small_run();
  Config cfg;
  cfg.rounds = 1;
  auto res = run_discovery(cfg, run.corpus, run.bg, run.priors);
  CHECK(res.reports.size() == 1);
  CHECK(res.state.stats.consolidations == 1);
  CHECK(res.state.mem.working.empty());
}

TEST_CASE("active split alternates") {
  auto run = small_run();
  Config cfg;
  cfg.rounds = 3;
  std::vector<SplitSide> after;
  std::vector<int> rounds;
  run_discovery(cfg, run.corpus, run.bg, run.priors, [&](const RoundState& s, const ConsolidationReport& rep) {
    after.push_back(s.active);
    rounds.push_back(rep.round);
  });
  CHECK(after == std::vector<SplitSide>{SplitSide::D2, SplitSide::D1, SplitSide::D2});
  CHECK(rounds == std::vector<int>{1, 2, 3});
}

TEST_CASE("mining the inactive split grows a newly consolidated slot") {
  auto cfg = small_config(2);
  cfg.consolidation_mode = ConsolidationMode::Naive;
  Corpus corpus;
  corpus.d = 2;
  DatasetSplit split;
  for (int i = 0; i < 5; ++i) {
    const std::string im = "d1_" + std::to_string(i);
    corpus.images.push_back({im, {region(im + "_r", im, {6.f + 0.1f * float(i), 0.f})}});
    split.d1.push_back(im);
  }
  corpus.images.push_back({"d2_0", {region("d2_0_r", "d2_0", {6.2f, 0.1f})}});
  split.d2.push_back("d2_0");

  RoundState state;
  state.mem = make_memory(cfg, identity_bg(2));
  auto rep = run_discovery_round(state, corpus, split);
  REQUIRE(rep.transferred == std::vector<std::string>{"disc_1_0"});
  const auto& slot = state.mem.semantic.at(0);
  CHECK(slot.pi_pos == 6);  // five from D1, one mined from D2
  CHECK(state.stats.mined == 1);
  CHECK(state.mem.owner.at("d2_0_r") == slot.slot_id);
  CHECK(state.active == SplitSide::D2);
  CHECK(state.round_index == 2);
}

TEST_CASE("identical inputs give identical outputs") {
  auto a = small_run(), b = small_run();
  Config cfg;
  cfg.rng_seed = 9;
  auto ra = run_discovery(cfg, a.corpus, a.bg, a.priors);
  auto rb = run_discovery(cfg, b.corpus, b.bg, b.priors);
  CHECK(assignments_to_tsv(ra.assignments) == assignments_to_tsv(rb.assignments));
  CHECK(stats_to_text(ra.state) == stats_to_text(rb.state));
  CHECK(checkpoint_to_bytes(ra.state.mem) == checkpoint_to_bytes(rb.state.mem));
}

TEST_CASE("assignments cover every region and round-trip through tsv") {
  auto run = small_run();
  auto res = run_discovery(Config{}, run.corpus, run.bg, run.priors);
  CHECK(res.assignments.size() == run.corpus.region_count());
  std::size_t labelled = 0;
  for (const auto& [id, label] : res.assignments) labelled += label != kUnassigned;
  CHECK(labelled > 0);
  CHECK(parse_assignments(assignments_to_tsv(res.assignments)) == res.assignments);

  auto kv = parse_key_values(stats_to_text(res.state));
  CHECK(kv.at("consolidations") == "2");
  CHECK(std::stoul(kv.at("accepted")) + std::stoul(kv.at("rejected")) == std::stoul(kv.at("regions_seen")));
  CHECK_THROWS_AS(parse_assignments("no tab here\n"), Error);
}

TEST_CASE("mismatched dimensions are refused") {
  auto run = small_run();
  auto cfg = small_config(5);
  CHECK_THROWS_AS(run_discovery(cfg, run.corpus, run.bg, run.priors), Error);
  CHECK_THROWS_AS(run_discovery(Config{}, run.corpus, identity_bg(3), run.priors), Error);
}
