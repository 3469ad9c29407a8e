// Copyright (c) 2026, The dualmem Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <map>
#include <set>

#include "support.hpp"

using namespace dualmem;
using Catch::Approx;

namespace {

SynthSpec tiny() {
  SynthSpec s;
  s.d = 8;
  s.n_known = 2;
  s.n_unknown = 3;
  s.images = 50;
  s.prior_per_class = 4;
  s.low_score_priors_per_class = 1;
  return s;
}

}  // namespace

TEST_CASE("class means sit at the requested pairwise separation") {
  SynthSpec s;
  auto means = class_means(s);
  REQUIRE(means.size() == 15);
  for (std::size_t i = 0; i < means.size(); ++i)
    for (std::size_t j = i + 1; j < means.size(); ++j) CHECK((means[i] - means[j]).norm() == Approx(8.0));
}

TEST_CASE("without unknown classes every object is a known class") {
  auto s = tiny();
  s.n_unknown = 0;
  auto out = generate(s);
  std::size_t labelled = 0;
  for (const auto& r : out.corpus.records)
    if (r.gt_label) {
      ++labelled;
      CHECK(r.gt_label->rfind("known_", 0) == 0);
    }
  CHECK(labelled == std::size_t(s.images * s.objects_per_image));
  for (const auto& g : out.gt) CHECK(g.known_flag);
}

TEST_CASE("generation is a pure function of the spec") {
  auto s = tiny();
  auto a = generate(s, 1), b = generate(s, 4);
  CHECK(region_file_to_binary(a.corpus) == region_file_to_binary(b.corpus));
  CHECK(ground_truth_to_jsonl(a.gt) == ground_truth_to_jsonl(b.gt));
  CHECK(region_file_to_binary(a.priors) == region_file_to_binary(b.priors));
  s.seed = 2;
  CHECK(region_file_to_binary(generate(s).corpus) != region_file_to_binary(a.corpus));
}

TEST_CASE("class counts are balanced exactly") {
  SynthSpec s = tiny();
  s.images = 100;
  auto out = generate(s);
  std::map<std::string, int> counts;
  for (const auto& g : out.gt) ++counts[g.class_name];
  REQUIRE(counts.size() == 5);
  for (const auto& [cls, n] : counts) CHECK(n == 40);  // 200 objects over 5 classes
}

TEST_CASE("ground truth boxes coincide with object regions and miss background") {
  auto out = generate(tiny());
  GroundTruthIndex gt(out.gt);
  for (const auto& r : out.corpus.records) {
    double best = 0;
    for (auto i : gt.in_image(r.image_id)) best = std::max(best, iou(r.box, gt.boxes()[i].box));
    CHECK(best == (r.gt_label ? 1.0 : 0.0));
  }
}

TEST_CASE("priors carry one instance per known class per prior image") {
  auto s = tiny();
  auto out = generate(s);
  CHECK(out.priors.records.size() == std::size_t((s.prior_per_class + s.low_score_priors_per_class) * s.n_known));
  auto priors = select_det_score_priors(out.priors.records, 0.9);
  REQUIRE(priors.size() == 2);
  CHECK(priors[0].regions.size() == std::size_t(s.prior_per_class));
}

TEST_CASE("nearest-mean accuracy at 8 sigma separation") {
  SynthSpec s;
  const auto means = class_means(s);
  const Vec scale = noise_scale(s);
  std::mt19937_64 rng(splitmix64(2024));
  const int draws = 100000;
  int correct = 0;
  for (int t = 0; t < draws; ++t) {
    const auto c = uniform_below(rng, means.size());
    Vec x = means[c];
    for (int k = 0; k < s.d; ++k) x[k] += scale[k] * standard_normal(rng);
    std::size_t best = 0;
    double bd = (x - means[0]).squaredNorm();
    for (std::size_t m = 1; m < means.size(); ++m)
      if (double v = (x - means[m]).squaredNorm(); v < bd) bd = v, best = m;
    correct += best == c;
  }
  CHECK(double(correct) / draws >= 0.999);
}

TEST_CASE("spec validation") {
  SynthSpec s;
  s.d = 10;  // 15 classes cannot be mutually equidistant in 10 dimensions here
  try {
    generate(s);
    FAIL("no throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InfeasibleSpec);
  }
  auto parsed = parse_synth_spec("d = 16\nn_unknown = 4\nseparation = 12\n");
  CHECK(parsed.d == 16);
  CHECK(parsed.n_unknown == 4);
  CHECK(parsed.separation == 12);
  CHECK_THROWS_AS(parse_synth_spec("colour = blue\n"), Error);
}

TEST_CASE("kmeans basics") {
  SECTION("k equal to the number of distinct points") {
    std::vector<Vec> pts{Vec::Constant(2, 0), Vec::Constant(2, 1), Vec::Constant(2, 5)};
    auto r = kmeans(pts, 3, 1);
    CHECK(r.inertia.back() == 0.0);
    std::set<int> distinct(r.assignment.begin(), r.assignment.end());
    CHECK(distinct.size() == 3);
  }
  SECTION("k = 1 gives the global mean") {
    std::vector<Vec> pts{Vec::Constant(2, 0), Vec::Constant(2, 1), Vec::Constant(2, 5)};
    auto r = kmeans(pts, 1, 1);
    CHECK(r.centroids[0].isApprox(Vec::Constant(2, 2)));
  }
  SECTION("two separated blobs are recovered") {
    std::mt19937_64 rng(splitmix64(8));
    std::vector<Vec> pts;
    std::vector<int> blob;
    for (int i = 0; i < 200; ++i) {
      Vec x(3);
      for (int k = 0; k < 3; ++k) x[k] = standard_normal(rng) + (i % 2 ? 20 : -20);
      pts.push_back(x);
      blob.push_back(i % 2);
    }
    auto r = kmeans(pts, 2, 3);
    for (std::size_t i = 0; i < pts.size(); ++i) CHECK((r.assignment[i] == r.assignment[0]) == (blob[i] == blob[0]));
  }
  SECTION("inertia never increases and runs are reproducible") {
    std::mt19937_64 rng(splitmix64(10));
    std::vector<Vec> pts;
    for (int i = 0; i < 500; ++i) {
      Vec x(4);
      for (int k = 0; k < 4; ++k) x[k] = standard_normal(rng);
      pts.push_back(x);
    }
    auto r = kmeans(pts, 7, 5);
    for (std::size_t i = 1; i < r.inertia.size(); ++i) CHECK(r.inertia[i] <= r.inertia[i - 1] * (1 + 1e-12));
    CHECK(r.iterations <= 100);
    CHECK(kmeans(pts, 7, 5).assignment == r.assignment);
  }
  SECTION("errors") {
    std::vector<Vec> pts{Vec::Zero(2)};
    CHECK_THROWS_AS(kmeans(pts, 2, 1), Error);
    CHECK_THROWS_AS(kmeans(pts, 0, 1), Error);
  }
}

TEST_CASE("baseline labels every region") {
  auto out = generate(tiny());
  auto corpus = ingest_records(out.corpus, Config{});
  auto a = kmeans_baseline(corpus, 5, 1);
  CHECK(a.size() == corpus.region_count());
  for (const auto& [id, label] : a) CHECK(label.rfind("km_", 0) == 0);
}
