// Copyright (c) 2026, The dualmem Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite. One PASS/FAIL line per criterion; exit status is the
// number of failures. Tolerances and thresholds are pinned here on purpose.

#include <Eigen/LU>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "dualmem/dualmem.hpp"

using namespace dualmem;

namespace {

// ---- pinned tolerances ------------------------------------------------------
constexpr double kMomentRelTol = 1e-9;
constexpr double kMomentSeconds = 5.0;
constexpr double kLdaRelTol = 1e-8;
constexpr double kMidpointTol = 1e-8;
constexpr double kCentroidTol = 1e-7;
constexpr double kClassifierRelTol = 1e-9;
constexpr double kMetricTol = 1e-12;
constexpr int kMinDiscovered = 8;
constexpr double kEndToEndSeconds = 60.0;
constexpr std::uint64_t kKmeansSeeds = 10;

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("violated: ") + what;
    }
  }
  void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double rel_err(const Mat& got, const Mat& ref) { return (got - ref).norm() / std::max(ref.norm(), 1e-300); }

// ---- shared synthetic setup -------------------------------------------------

struct Bench {
  SynthSpec spec;
  SynthCorpus synth;
  Corpus corpus;
  std::shared_ptr<const BackgroundStats> bg;
  std::vector<SemanticPrior> priors;
  GroundTruthIndex gt;
};

Bench make_bench(const SynthSpec& spec, const Config& config) {
  Bench b;
  b.spec = spec;
  b.synth = generate(spec, 1);
  b.corpus = ingest_records(b.synth.corpus, config);
  MomentAccumulator acc(spec.d);
  for (const auto& im : b.corpus.images)
    for (const auto& r : im.regions) acc.add(r.feature);
  b.bg = std::make_shared<const BackgroundStats>(finalize_background(acc, config.ridge_lambda));
  std::vector<std::string> known;
  for (int c = 0; c < spec.n_known; ++c) known.push_back(class_name(spec, c));
  b.priors = select_det_score_priors(b.synth.priors.records, config.semantic_prior_score, known);
  b.gt = GroundTruthIndex(b.synth.gt);
  return b;
}

SynthSpec table_spec(double separation) {
  SynthSpec s;  // 5 known + 10 unknown, d = 32, 2000 images
  s.separation = separation;
  s.seed = 1;
  return s;
}

Config run_config() {
  Config c;
  c.rounds = 2;
  c.rng_seed = 1;
  return c;
}

struct RunMetrics {
  DiscoveryResult result;
  MetricsReport report;
  std::vector<Cluster> clusters;
};

RunMetrics run_and_eval(const Bench& b, const Config& config) {
  RunMetrics m;
  m.result = run_discovery(config, b.corpus, b.bg, b.priors);
  m.clusters = clusters_from_assignments(m.result.assignments, b.corpus);
  m.report = evaluate(m.clusters, b.gt);
  return m;
}

// ---- invariant checks shared by AC3/AC4 -------------------------------------

double worst_centroid_error(const DualMemory& mem) {
  double worst = 0;
  for (const auto& w : mem.working) {
    const Vec ref = member_mean(mem, w.members);
    worst = std::max(worst, (w.mu_c - ref).norm() / std::max(1.0, ref.norm()));
  }
  return worst;
}

double worst_semantic_error(const DualMemory& mem) {
  double worst = 0;
  for (const auto& s : mem.semantic) {
    const Vec ref_mu = member_mean(mem, s.members);
    worst = std::max(worst, (s.mu_pos - ref_mu).norm() / std::max(1.0, ref_mu.norm()));
    const auto ref = lda_train(s.mu_pos, s.pi_pos, *mem.bg);
    worst = std::max(worst, (s.clf.w - ref.w).norm() / std::max(1.0, ref.w.norm()));
    worst = std::max(worst, std::abs(s.clf.b - ref.b) / std::max(1.0, std::abs(ref.b)));
    if (s.pi_pos != s.members.size()) worst = std::max(worst, 1.0);
  }
  return worst;
}

std::vector<std::string> sorted_working_members(const DualMemory& mem) {
  std::vector<std::string> out;
  for (const auto& w : mem.working) out.insert(out.end(), w.members.begin(), w.members.end());
  std::sort(out.begin(), out.end());
  return out;
}

// ---- criteria ---------------------------------------------------------------

Outcome ac1_streaming_moments() {
  Outcome o;
  constexpr int n = 10000, d = 64;
  std::mt19937_64 rng(splitmix64(101));
  std::vector<Vec> xs(n, Vec(d));
  for (auto& x : xs)
    for (int k = 0; k < d; ++k) x[k] = 3.0 + (1.0 + 0.1 * k) * standard_normal(rng);

  // Two-pass batch oracle.
  Vec mean = Vec::Zero(d);
  for (const auto& x : xs) mean += x;
  mean /= double(n);
  Mat cov = Mat::Zero(d, d);
  for (const auto& x : xs) cov.noalias() += (x - mean) * (x - mean).transpose();
  cov /= double(n);

  const auto t0 = Clock::now();
  double worst = 0;
  auto check = [&](const MomentAccumulator& acc) {
    o.require(acc.count() == std::uint64_t(n), "sample count");
    worst = std::max({worst, rel_err(acc.mean(), mean), rel_err(acc.covariance(), cov)});
  };
  MomentAccumulator seq(d);
  for (const auto& x : xs) seq.add(x);
  check(seq);
  for (unsigned threads : {2u, 3u, 8u, 16u})
    check(accumulate_chunked(xs, d, threads, [](const Vec& v) -> const Vec& { return v; }));
  // Uneven chunks merged as a random binary tree.
  std::vector<MomentAccumulator> parts;
  for (std::size_t lo = 0; lo < xs.size();) {
    const std::size_t hi = std::min(xs.size(), lo + 1 + std::size_t(uniform_below(rng, 900)));
    MomentAccumulator a(d);
    for (std::size_t i = lo; i < hi; ++i) a.add(xs[i]);
    parts.push_back(std::move(a));
    lo = hi;
  }
  while (parts.size() > 1) {
    const std::size_t i = std::size_t(uniform_below(rng, parts.size() - 1));
    parts[i] = merge(parts[i], parts[i + 1]);
    parts.erase(parts.begin() + std::ptrdiff_t(i) + 1);
  }
  check(parts.front());
  const double secs = seconds_since(t0);

  o.require(worst <= kMomentRelTol, "relative error within 1e-9");
  o.require(secs < kMomentSeconds, "runtime under 5 s");
  o.note("worst relative error " + fmt("%.2e", worst) + " over 6 schedules, " + fmt("%.2f", secs) + " s");
  return o;
}

Outcome ac2_lda_closed_form() {
  Outcome o;
  std::mt19937_64 rng(splitmix64(202));
  double worst_w = 0, worst_b = 0, worst_mid = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int d = 1 + int(uniform_below(rng, 32));
    Mat a(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) a(i, j) = standard_normal(rng);
    const Mat sigma = a * a.transpose() / double(d) + 0.05 * Mat::Identity(d, d);
    Vec mu_neg(d), mu_pos(d);
    for (int i = 0; i < d; ++i) mu_neg[i] = standard_normal(rng), mu_pos[i] = mu_neg[i] + 2 * standard_normal(rng);
    const std::uint64_t pi = 10 + uniform_below(rng, 1000);
    auto bg = make_background(mu_neg, sigma, pi);

    // Independent dense solve.
    const Vec w_ref = sigma.fullPivLu().solve(mu_pos - mu_neg);
    const std::uint64_t pi_pos = 1 + uniform_below(rng, 2000);
    const double b_ref = std::log(double(pi_pos) / double(pi)) - 0.5 * w_ref.dot(mu_pos + mu_neg);
    const auto clf = lda_train(mu_pos, pi_pos, bg);
    worst_w = std::max(worst_w, (clf.w - w_ref).norm() / std::max(w_ref.norm(), 1e-300));
    worst_b = std::max(worst_b, std::abs(clf.b - b_ref) / std::max(1.0, std::abs(b_ref)));

    const auto balanced = lda_train(mu_pos, pi, bg);
    worst_mid = std::max(worst_mid, std::abs(lda_score(balanced, 0.5 * (mu_pos + mu_neg))));
  }
  o.require(worst_w <= kLdaRelTol && worst_b <= kLdaRelTol, "w and b within 1e-8 of the dense solve");
  o.require(worst_mid <= kMidpointTol, "midpoint score within 1e-8 of zero");
  o.note("100 SPD covariances, d <= 32: w err " + fmt("%.2e", worst_w) + ", b err " + fmt("%.2e", worst_b) +
         ", |midpoint score| " + fmt("%.2e", worst_mid));
  return o;
}

Outcome ac3_engine_invariants() {
  Outcome o;
  SynthSpec spec = table_spec(8.0);
  spec.images = 1000;
  Config config = run_config();
  config.slot_cap = 10;
  const Bench b = make_bench(spec, config);

  // Step the rounds image by image so the cap is checked after every update.
  RoundState state;
  state.mem = init_semantic(config, b.bg, b.priors, config.init_mode);
  const auto split = split_dataset(b.corpus.image_ids(), config.rng_seed);
  const auto index = b.corpus.index();
  std::size_t max_slots = state.mem.total_slots();
  double worst_centroid = 0, worst_semantic = 0;
  for (int r = 0; r < config.rounds; ++r) {
    for (const auto& id : split.side(state.active)) {
      process_image(state.mem, b.corpus.images[index.at(id)].regions);
      max_slots = std::max(max_slots, state.mem.total_slots());
      worst_centroid = std::max(worst_centroid, worst_centroid_error(state.mem));
    }
    worst_semantic = std::max(worst_semantic, worst_semantic_error(state.mem));
    consolidate(state.mem, state.round_index);
    mine_with_semantic(state.mem, b.corpus, index, split.side(state.active == SplitSide::D1 ? SplitSide::D2 : SplitSide::D1));
    max_slots = std::max(max_slots, state.mem.total_slots());
    worst_semantic = std::max(worst_semantic, worst_semantic_error(state.mem));
    state.active = state.active == SplitSide::D1 ? SplitSide::D2 : SplitSide::D1;
    ++state.round_index;
  }
  // The stepped run must be the library's run.
  const auto lib = run_discovery(config, b.corpus, b.bg, b.priors);
  o.require(checkpoint_to_bytes(lib.state.mem) == checkpoint_to_bytes(state.mem), "stepped run equals run_discovery");

  const auto& c = state.mem.counters;
  o.require(worst_centroid <= kCentroidTol, "working centroid equals member mean within 1e-7");
  o.require(worst_semantic <= kClassifierRelTol, "semantic classifiers match recomputation");
  o.require(max_slots <= std::size_t(config.slot_cap), "slot total never exceeds slot_cap");
  o.require(c.rejected > 0, "cap forces Rejected decisions");
  o.require(c.accepted() + c.rejected == c.regions_seen, "decision counts add up");
  o.note("1000 images, cap 10: max slots " + std::to_string(max_slots) + ", rejected " + std::to_string(c.rejected) +
         ", centroid err " + fmt("%.1e", worst_centroid) + ", classifier err " + fmt("%.1e", worst_semantic));
  return o;
}

Outcome ac4_consolidation_contracts() {
  Outcome o;
  SynthSpec spec = table_spec(8.0);
  spec.images = 600;
  Config config = run_config();
  const Bench b = make_bench(spec, config);

  // Working memory as it stands at the end of a real streaming phase.
  DualMemory filled = init_semantic(config, b.bg, b.priors, config.init_mode);
  const auto split = split_dataset(b.corpus.image_ids(), config.rng_seed);
  const auto index = b.corpus.index();
  for (const auto& id : split.d1) process_image(filled, b.corpus.images[index.at(id)].regions);

  // Merge conserves the sample multiset and partitions the old membership.
  DualMemory merged = filled;
  const auto before = sorted_working_members(merged);
  const auto graph = build_affinity_graph(merged, train_slot_classifiers(merged));
  std::map<std::string, int> old_owner;
  for (const auto& w : filled.working)
    for (const auto& id : w.members) old_owner[id] = w.slot_id;
  const auto merged_away = merge_components(merged, graph);
  o.require(sorted_working_members(merged) == before, "merge conserves the sample multiset");
  std::map<int, int> old_to_new;
  bool partition = true;
  for (const auto& w : merged.working)
    for (const auto& id : w.members) {
      auto [it, fresh] = old_to_new.emplace(old_owner.at(id), w.slot_id);
      partition &= fresh || it->second == w.slot_id;
    }
  o.require(partition, "merged slots are unions of whole pre-merge slots");

  // Refine leaves only non-negative scores.
  DualMemory refined = merged;
  const auto classifiers = train_slot_classifiers(refined);
  const auto rr = refine_slots(refined, classifiers);
  double min_score = std::numeric_limits<double>::infinity();
  for (const auto& w : refined.working)
    for (const auto& id : w.members) min_score = std::min(min_score, lda_score(classifiers.at(w.slot_id), refined.feature_of(id)));
  o.require(refined.working.empty() || min_score >= 0, "every retained sample scores >= 0 after refine");

  // Naive equals merge when the graph is edgeless.
  DualMemory naive = filled, merge_only = filled;
  naive.config.consolidation_mode = ConsolidationMode::Naive;
  merge_only.config.consolidation_mode = ConsolidationMode::Merge;
  naive.config.merge_edge_threshold = merge_only.config.merge_edge_threshold = 1e300;
  const bool edgeless = build_affinity_graph(merge_only, train_slot_classifiers(merge_only)).edges.empty();
  o.require(edgeless, "fixture graph is edgeless");
  const auto rn = consolidate(naive, 1), rm = consolidate(merge_only, 1);
  merge_only.config = naive.config;
  o.require(rn.transferred == rm.transferred && checkpoint_to_bytes(naive) == checkpoint_to_bytes(merge_only),
            "naive equals merge on an edgeless graph");

  // Every mode empties working memory and only adds semantic slots.
  bool emptied = true, grew = true;
  for (auto mode : {ConsolidationMode::Naive, ConsolidationMode::Merge, ConsolidationMode::MergeRefine}) {
    DualMemory m = filled;
    m.config.consolidation_mode = mode;
    const auto sem_before = m.semantic.size();
    const auto rep = consolidate(m, 1);
    emptied &= m.working.empty();
    grew &= m.semantic.size() == sem_before + rep.transferred.size();
  }
  o.require(emptied, "consolidate empties working memory in every mode");
  o.require(grew, "semantic memory grows by exactly the transferred slots");
  o.note(std::to_string(filled.working.size()) + " working slots, " + std::to_string(graph.edges.size()) + " edges, " +
         std::to_string(merged_away) + " merged away, " + std::to_string(rr.samples_dropped) + " refined out, min retained score " +
         fmt("%.3g", min_score));
  return o;
}

Outcome ac5_metric_fixtures() {
  Outcome o;
  const BoundingBox obj{0, 0, 10, 10}, away{100, 100, 110, 110};
  std::vector<RegionRecord> store;
  store.reserve(32);
  auto add = [&](const std::string& image, BoundingBox box) -> const RegionRecord* {
    RegionRecord r;
    r.region_id = "r" + std::to_string(store.size());
    r.image_id = image;
    r.box = box;
    r.feature = {1.0f};
    store.push_back(r);
    return &store.back();
  };

  // Purities {1.0, 0.5}, coverages {0.2, 0.6} over five unknown boxes.
  std::vector<GroundTruthBox> gt{{"1", obj, "a", false}, {"2", obj, "b", false}, {"3", obj, "b", false},
                                 {"4", obj, "c", false}, {"5", obj, "c", false}};
  std::vector<Cluster> clusters{{"A", {add("1", obj)}}, {"B", {add("2", obj), add("3", obj), add("4", away), add("5", away)}}};
  const GroundTruthIndex index(gt);
  const auto curve = cumulative_purity_curve(clusters, index, 0.5);
  const bool curve_ok = curve.size() == 2 && curve[0].cumulative_purity == 1.0 && curve[1].cumulative_purity == 0.75 &&
                        std::abs(curve[0].coverage - 0.2) <= kMetricTol && std::abs(curve[1].coverage - 0.6) <= kMetricTol;
  o.require(curve_ok, "cumulative purities {1.0, 0.75} at coverages {0.2, 0.6}");
  const double area = auc(curve);
  o.require(std::abs(area - 55.0) <= kMetricTol, "AuC 55.0");

  const double v_iou = iou({0, 0, 10, 10}, {5, 0, 15, 10});
  o.require(v_iou == 1.0 / 3.0, "IoU of half-shifted boxes is 1/3");

  // CorLoc: two images, one localized.
  std::vector<GroundTruthBox> gt2{{"p", obj, "a", false}, {"q", obj, "b", false}};
  std::vector<Cluster> c2{{"x", {add("p", obj), add("q", {5, 0, 15, 10})}}};
  const double v_corloc = corloc(c2, GroundTruthIndex(gt2));
  o.require(v_corloc == 50.0, "CorLoc 50");

  // DetRate: three of four boxes recalled.
  std::vector<GroundTruthBox> gt3{{"w", obj, "a", true}, {"x", obj, "a", false}, {"y", obj, "b", false}, {"z", obj, "b", true}};
  std::vector<Cluster> c3{{"x", {add("w", obj), add("x", obj), add("y", obj), add("z", away)}}};
  const double v_detrate = detrate(c3, GroundTruthIndex(gt3), 0.5);
  o.require(v_detrate == 75.0, "DetRate 75");

  o.note("AuC " + fmt("%.15g", area) + ", IoU " + fmt("%.17g", v_iou) + ", CorLoc " + fmt("%g", v_corloc) + ", DetRate " +
         fmt("%g", v_detrate));
  return o;
}

// AC6-AC8 share the 8-sigma corpus.
struct Shared {
  Bench bench;
  RunMetrics main;
};

double nearest_mean_accuracy(const Bench& b) {
  const auto means = class_means(b.spec);
  std::size_t hits = 0, total = 0;
  for (const auto& r : b.synth.corpus.records) {
    if (!r.gt_label) continue;
    const Vec f = to_vec(r.feature);
    std::size_t best = 0;
    for (std::size_t c = 1; c < means.size(); ++c)
      if ((f - means[c]).squaredNorm() < (f - means[best]).squaredNorm()) best = c;
    hits += class_name(b.spec, int(best)) == *r.gt_label;
    ++total;
  }
  return double(hits) / double(total);
}

Outcome ac6_end_to_end(Shared& sh) {
  Outcome o;
  const auto t0 = Clock::now();
  const Config config = run_config();
  sh.bench = make_bench(table_spec(8.0), config);
  sh.main = run_and_eval(sh.bench, config);
  const double engine_auc = sh.main.report.at("auc_0.5");
  const int discovered = int(sh.main.report.at("n_discovered"));

  // K-means with k matched to the number of discovered slots.
  std::size_t k = 0;
  for (const auto& s : sh.main.result.state.mem.semantic) k += s.label.rfind("disc_", 0) == 0;
  // A single K-means seed is a lottery (its AuC spreads over several points),
  // so the engine is compared against the mean over a pinned seed set.
  double km_auc = 0, km_lo = 1e300, km_hi = -1e300;
  int engine_wins = 0;
  for (std::uint64_t seed = 1; seed <= kKmeansSeeds; ++seed) {
    const auto km = kmeans_baseline(sh.bench.corpus, int(std::max<std::size_t>(k, 1)), seed);
    const double v = evaluate(clusters_from_assignments(km, sh.bench.corpus), sh.bench.gt).at("auc_0.5");
    km_auc += v / double(kKmeansSeeds);
    km_lo = std::min(km_lo, v), km_hi = std::max(km_hi, v);
    engine_wins += engine_auc >= v;
  }

  // 12-sigma corpus: every transferred slot must be pure.
  const Bench wide = make_bench(table_spec(12.0), config);
  const auto wide_run = run_and_eval(wide, config);
  double min_purity = 1.0;
  std::size_t transferred = 0;
  for (const auto& c : wide_run.clusters)
    if (c.label.rfind("disc_", 0) == 0) {
      min_purity = std::min(min_purity, purity(c, wide.gt, 0.5).purity);
      ++transferred;
    }
  const double secs = seconds_since(t0);

  o.require(engine_auc >= km_auc, "(a) engine AuC@0.5 >= mean K-means AuC@0.5");
  o.require(discovered >= kMinDiscovered, "(b) at least 8 of 10 unknown classes discovered");
  o.require(transferred > 0 && min_purity == 1.0, "(c) every transferred slot pure at 12 sigma");
  o.require(secs < kEndToEndSeconds, "runtime under 60 s");
  o.note("(a) AuC@0.5 " + fmt("%.2f", engine_auc) + " vs K-means mean " + fmt("%.2f", km_auc) + " [" + fmt("%.2f", km_lo) + ", " + fmt("%.2f", km_hi) +
         "] at k=" + std::to_string(k) + ", engine ahead on " + std::to_string(engine_wins) + "/" +
         std::to_string(kKmeansSeeds) + " seeds" +
         "; (b) discovered " + std::to_string(discovered) + "/10; (c) " + std::to_string(transferred) +
         " transferred, min purity " + fmt("%.4f", min_purity) + "; nearest-mean accuracy " +
         fmt("%.4f", nearest_mean_accuracy(sh.bench)) + "; " + fmt("%.1f", secs) + " s");
  return o;
}

Outcome ac7_ablation_direction(const Shared& sh) {
  Outcome o;
  Config null_init = run_config();
  null_init.init_mode = InitMode::Null;
  Config naive = run_config();
  naive.consolidation_mode = ConsolidationMode::Naive;
  const auto r_null = run_and_eval(sh.bench, null_init);
  const auto r_naive = run_and_eval(sh.bench, naive);

  const double disc_det = sh.main.report.at("n_discovered"), disc_null = r_null.report.at("n_discovered");
  const double auc_refine = sh.main.report.at("auc_0.5"), auc_naive = r_naive.report.at("auc_0.5");
  o.require(disc_det >= disc_null, "det_scores discovers >= null");
  o.require(auc_refine >= auc_naive, "merge_refine AuC >= naive AuC");
  o.note("discovered det_scores " + fmt("%g", disc_det) + " vs null " + fmt("%g", disc_null) + "; AuC@0.5 merge_refine " +
         fmt("%.2f", auc_refine) + " vs naive " + fmt("%.2f", auc_naive));
  return o;
}

Outcome ac8_determinism(const Shared& sh) {
  Outcome o;
  // Second run from an independently regenerated corpus, generated with
  // several threads to also cover scheduling.
  const Config config = run_config();
  Bench again;
  again.spec = sh.bench.spec;
  again.synth = generate(again.spec, 4);
  again.corpus = ingest_records(again.synth.corpus, config);
  MomentAccumulator acc = accumulate_chunked(again.synth.corpus.records, again.spec.d, 1,
                                             [](const RegionRecord& r) { return to_vec(r.feature); });
  again.bg = std::make_shared<const BackgroundStats>(finalize_background(acc, config.ridge_lambda));
  std::vector<std::string> known;
  for (int c = 0; c < again.spec.n_known; ++c) known.push_back(class_name(again.spec, c));
  again.priors = select_det_score_priors(again.synth.priors.records, config.semantic_prior_score, known);
  again.gt = GroundTruthIndex(again.synth.gt);
  const auto second = run_and_eval(again, config);

  const bool same_assign = assignments_to_tsv(sh.main.result.assignments) == assignments_to_tsv(second.result.assignments);
  const bool same_stats = stats_to_text(sh.main.result.state) == stats_to_text(second.result.state);
  bool same_curves = sh.main.report.curves.size() == second.report.curves.size();
  for (const auto& [t, curve] : sh.main.report.curves)
    same_curves &= second.report.curves.count(t) && curve_to_csv(curve) == curve_to_csv(second.report.curves.at(t));
  o.require(same_assign, "assignments.tsv byte-identical");
  o.require(same_stats, "stats.txt byte-identical");
  o.require(same_curves, "curve CSVs byte-identical");
  o.note(std::to_string(sh.main.result.assignments.size()) + " assignments, " +
         std::to_string(sh.main.report.curves.size()) + " curves compared");
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    const char* id;
    const char* title;
    std::function<Outcome()> run;
  };
  Shared shared;
  const std::vector<Criterion> criteria{
      {"AC1", "streaming moments match the two-pass oracle", ac1_streaming_moments},
      {"AC2", "LDA closed form matches a dense solve", ac2_lda_closed_form},
      {"AC3", "engine invariants under a slot cap", ac3_engine_invariants},
      {"AC4", "consolidation contracts", ac4_consolidation_contracts},
      {"AC5", "metric hand-checks", ac5_metric_fixtures},
      {"AC6", "synthetic end-to-end ordering", [&] { return ac6_end_to_end(shared); }},
      {"AC7", "ablation directions", [&] { return ac7_ablation_direction(shared); }},
      {"AC8", "run determinism", [&] { return ac8_determinism(shared); }},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failures += !o.pass;
    std::printf("%s %s  %s -- %s\n", c.id, o.pass ? "PASS" : "FAIL", c.title, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", int(criteria.size()) - failures, criteria.size());
  return failures;
}
