// Copyright (c) 2026, The dualmem Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic benchmark corpora (Gaussian known / unknown / background classes
// with grid geometry) and the seeded k-means baseline.

#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "dualmem/pipeline.hpp"

namespace dualmem {

struct SynthSpec {
  int d = 32;
  int n_known = 5;
  int n_unknown = 10;
  int images = 2000;
  int objects_per_image = 2;       // exact number of class instances per image
  int background_per_image = 4;
  double separation = 8.0;         // pairwise class-mean distance, in within_std units
  double within_std = 1.0;
  double background_std = 0.5;     // in within_std units, centred at the origin
  double mean_offset = 0.0;        // norm of the offset shared by all class means, in within_std units
  double anisotropy = 0.0;         // 0: isotropic noise
  double distractor_fraction = 0.0;  // leading images that contain unknown classes only
  int prior_per_class = 50;        // high-score (0.95) prior detections per known class
  int low_score_priors_per_class = 10;  // labelled priors at score 0.5
  std::uint64_t seed = 1;
};

inline void validate(const SynthSpec& s) {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::InvalidArgument, "synth spec: " + m); };
  if (s.d < 1) fail("d must be >= 1");
  if (s.n_known < 0 || s.n_unknown < 0 || s.images < 0 || s.objects_per_image < 0 || s.background_per_image < 0 ||
      s.prior_per_class < 0 || s.low_score_priors_per_class < 0)
    fail("counts must be >= 0");
  if (!(s.separation > 0)) fail("separation must be > 0");
  if (!(s.within_std > 0)) fail("within_std must be > 0");
  if (!(s.background_std >= 0) || !(s.mean_offset >= 0) || !(s.anisotropy >= 0)) fail("scales must be >= 0");
  if (!(s.distractor_fraction >= 0 && s.distractor_fraction <= 1)) fail("distractor_fraction must lie in [0, 1]");
  if (s.objects_per_image > 0 && s.n_known + s.n_unknown == 0) fail("objects requested but no classes");
  if (s.distractor_fraction > 0 && s.n_unknown == 0) fail("distractor images need unknown classes");
  const int axes = s.n_known + s.n_unknown + (s.mean_offset > 0 ? 1 : 0);
  if (axes > s.d)
    throw Error(ErrorKind::InfeasibleSpec, "d = " + std::to_string(s.d) + " cannot hold " +
                                               std::to_string(s.n_known + s.n_unknown) +
                                               " class means at the requested separation");
}

inline SynthSpec parse_synth_spec(std::string_view text) {
  SynthSpec s;
  for (const auto& [key, value] : parse_key_values(text)) {
    using detail::parse_number;
    if (key == "d") s.d = parse_number<int>(key, value);
    else if (key == "n_known") s.n_known = parse_number<int>(key, value);
    else if (key == "n_unknown") s.n_unknown = parse_number<int>(key, value);
    else if (key == "images") s.images = parse_number<int>(key, value);
    else if (key == "objects_per_image") s.objects_per_image = parse_number<int>(key, value);
    else if (key == "background_per_image") s.background_per_image = parse_number<int>(key, value);
    else if (key == "separation") s.separation = parse_number<double>(key, value);
    else if (key == "within_std") s.within_std = parse_number<double>(key, value);
    else if (key == "background_std") s.background_std = parse_number<double>(key, value);
    else if (key == "mean_offset") s.mean_offset = parse_number<double>(key, value);
    else if (key == "anisotropy") s.anisotropy = parse_number<double>(key, value);
    else if (key == "distractor_fraction") s.distractor_fraction = parse_number<double>(key, value);
    else if (key == "prior_per_class") s.prior_per_class = parse_number<int>(key, value);
    else if (key == "low_score_priors_per_class") s.low_score_priors_per_class = parse_number<int>(key, value);
    else if (key == "seed") s.seed = parse_number<std::uint64_t>(key, value);
    else throw Error(ErrorKind::Parse, "unknown spec key '" + key + "'");
  }
  validate(s);
  return s;
}

inline std::string class_name(const SynthSpec& s, int c) {
  char buf[32];
  if (c < s.n_known) std::snprintf(buf, sizeof buf, "known_%02d", c);
  else std::snprintf(buf, sizeof buf, "novel_%02d", c - s.n_known);
  return buf;
}

/// Class means: simplex vertices (scaled basis vectors, pairwise distance
/// exactly separation * within_std) plus a shared offset on the spare axes.
inline std::vector<Vec> class_means(const SynthSpec& s) {
  validate(s);
  const int n = s.n_known + s.n_unknown;
  const double edge = s.separation * s.within_std / std::sqrt(2.0);
  Vec offset = Vec::Zero(s.d);
  const int spare = s.d - n;
  if (s.mean_offset > 0)
    for (int k = n; k < s.d; ++k) offset[k] = s.mean_offset * s.within_std / std::sqrt(double(spare));
  std::vector<Vec> means;
  for (int c = 0; c < n; ++c) {
    Vec m = offset;
    m[c] += edge;
    means.push_back(std::move(m));
  }
  return means;
}

/// Per-dimension noise scale; geometric mean within_std when anisotropic.
inline Vec noise_scale(const SynthSpec& s) {
  Vec scale(s.d);
  for (int k = 0; k < s.d; ++k) {
    const double t = s.d > 1 ? double(k) / double(s.d - 1) - 0.5 : 0.0;
    scale[k] = s.within_std * std::exp(s.anisotropy * t);
  }
  return scale;
}

struct SynthCorpus {
  RegionFile corpus;
  std::vector<GroundTruthBox> gt;
  RegionFile priors;
  std::vector<GroundTruthBox> priors_gt;
};

namespace detail {

inline std::string padded_id(const char* prefix, long v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%s%05ld", prefix, v);
  return buf;
}

inline BoundingBox grid_box(int cell) {
  const float x = float(2 * cell);
  return {x, 0.f, x + 1.f, 1.f};
}

inline std::vector<float> draw_feature(std::mt19937_64& rng, const Vec& mean, const Vec& scale, double extra) {
  std::vector<float> f(std::size_t(mean.size()));
  for (Eigen::Index k = 0; k < mean.size(); ++k)
    f[std::size_t(k)] = static_cast<float>(mean[k] + extra * scale[k] * standard_normal(rng));
  return f;
}

/// Deals `count` class ids from consecutive seeded permutations of `pool`,
/// so every class appears floor or ceil of count/|pool| times.
inline std::vector<int> deal_classes(std::mt19937_64& rng, std::vector<int> pool, std::size_t count) {
  std::vector<int> out;
  out.reserve(count);
  while (out.size() < count) {
    deterministic_shuffle(pool, rng);
    for (int c : pool) {
      if (out.size() == count) break;
      out.push_back(c);
    }
  }
  return out;
}

}  // namespace detail

/// Generates the corpus, its ground truth, and labelled prior detections for
/// the known classes. Output is a pure function of the spec; `threads` only
/// changes how the per-image work is scheduled.
inline SynthCorpus generate(const SynthSpec& spec, unsigned threads = 1) {
  validate(spec);
  const auto means = class_means(spec);
  const Vec scale = noise_scale(spec);
  const Vec origin = Vec::Zero(spec.d);
  const int n_classes = spec.n_known + spec.n_unknown;

  // Class schedule: exact counts, seeded order.
  std::mt19937_64 schedule_rng(splitmix64(spec.seed));
  const int n_distractor = static_cast<int>(std::floor(spec.distractor_fraction * spec.images));
  std::vector<int> all(static_cast<std::size_t>(n_classes)), unknown;
  std::iota(all.begin(), all.end(), 0);
  for (int c = spec.n_known; c < n_classes; ++c) unknown.push_back(c);
  const auto per_image = std::size_t(spec.objects_per_image);
  auto distractor_classes = detail::deal_classes(schedule_rng, unknown, std::size_t(n_distractor) * per_image);
  auto normal_classes = detail::deal_classes(schedule_rng, all, std::size_t(spec.images - n_distractor) * per_image);

  struct ImageOut {
    std::vector<RegionRecord> regions;
    std::vector<GroundTruthBox> gt;
  };
  std::vector<ImageOut> per(std::size_t(spec.images));

  auto make_image = [&](int i) {
    std::mt19937_64 rng(splitmix64(spec.seed ^ std::uint64_t(i)));
    auto& out = per[std::size_t(i)];
    const std::string image_id = detail::padded_id("img_", i);
    int cell = 0;
    for (std::size_t o = 0; o < per_image; ++o) {
      const int c = i < n_distractor ? distractor_classes[std::size_t(i) * per_image + o]
                                     : normal_classes[std::size_t(i - n_distractor) * per_image + o];
      RegionRecord r;
      r.region_id = image_id + "_r" + std::to_string(cell);
      r.image_id = image_id;
      r.box = detail::grid_box(cell++);
      r.score = 0.5f;
      r.feature = detail::draw_feature(rng, means[std::size_t(c)], scale, 1.0);
      r.gt_label = class_name(spec, c);
      out.gt.push_back({image_id, r.box, *r.gt_label, c < spec.n_known});
      out.regions.push_back(std::move(r));
    }
    for (int b = 0; b < spec.background_per_image; ++b) {
      RegionRecord r;
      r.region_id = image_id + "_r" + std::to_string(cell);
      r.image_id = image_id;
      r.box = detail::grid_box(cell++);
      r.score = 0.5f;
      r.feature = detail::draw_feature(rng, origin, scale, spec.background_std);
      out.regions.push_back(std::move(r));
    }
  };

  threads = std::max(1u, threads);
  if (threads == 1 || spec.images < 2) {
    for (int i = 0; i < spec.images; ++i) make_image(i);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        for (int i = int(t); i < spec.images; i += int(threads)) make_image(i);
      });
    for (auto& th : pool) th.join();
  }

  SynthCorpus out;
  out.corpus.d = spec.d;
  for (auto& im : per) {
    for (auto& r : im.regions) out.corpus.records.push_back(std::move(r));
    for (auto& g : im.gt) out.gt.push_back(std::move(g));
  }

  // Priors: one image per draw holding one instance of every known class.
  out.priors.d = spec.d;
  std::mt19937_64 prior_rng(splitmix64(spec.seed ^ 0x5052494f52ULL));
  const int prior_images = spec.prior_per_class + spec.low_score_priors_per_class;
  for (int p = 0; p < prior_images; ++p) {
    const std::string image_id = detail::padded_id("prior_", p);
    const float score = p < spec.prior_per_class ? 0.95f : 0.5f;
    for (int c = 0; c < spec.n_known; ++c) {
      RegionRecord r;
      r.region_id = image_id + "_r" + std::to_string(c);
      r.image_id = image_id;
      r.box = detail::grid_box(c);
      r.score = score;
      r.feature = detail::draw_feature(prior_rng, means[std::size_t(c)], scale, 1.0);
      r.gt_label = class_name(spec, c);
      out.priors_gt.push_back({image_id, r.box, *r.gt_label, true});
      out.priors.records.push_back(std::move(r));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

struct KMeansResult {
  std::vector<int> assignment;
  std::vector<Vec> centroids;
  std::vector<double> inertia;  // after each assignment step
  int iterations = 0;
};

/// Lloyd's algorithm with k-means++ seeding. Stops after 100 iterations, when
/// no point changes cluster, or when inertia changes by less than 1e-6 relative.
inline KMeansResult kmeans(const std::vector<Vec>& points, int k, std::uint64_t seed, int max_iterations = 100) {
  if (k < 1) throw Error(ErrorKind::InvalidArgument, "kmeans: k must be >= 1");
  if (std::size_t(k) > points.size())
    throw Error(ErrorKind::InvalidArgument, "kmeans: k = " + std::to_string(k) + " exceeds " + std::to_string(points.size()) + " records");
  const std::size_t n = points.size();
  std::mt19937_64 rng(splitmix64(seed));

  KMeansResult res;
  res.centroids.push_back(points[uniform_below(rng, n)]);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  while (res.centroids.size() < std::size_t(k)) {
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (points[i] - res.centroids.back()).squaredNorm());
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0) {
      double target = uniform_unit(rng) * total, acc = 0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > target && d2[i] > 0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = uniform_below(rng, n);
    }
    res.centroids.push_back(points[pick]);
  }

  res.assignment.assign(n, -1);
  for (int it = 0; it < max_iterations; ++it) {
    bool changed = false;
    double inertia = 0;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double v = (points[i] - res.centroids[std::size_t(c)]).squaredNorm();
        if (v < bd) bd = v, best = c;
      }
      changed |= res.assignment[i] != best;
      res.assignment[i] = best;
      inertia += bd;
    }
    res.inertia.push_back(inertia);
    res.iterations = it + 1;

    std::vector<Vec> sums(std::size_t(k), Vec::Zero(points.front().size()));
    std::vector<std::size_t> counts(std::size_t(k), 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums[std::size_t(res.assignment[i])] += points[i];
      ++counts[std::size_t(res.assignment[i])];
    }
    for (int c = 0; c < k; ++c)
      if (counts[std::size_t(c)] > 0) res.centroids[std::size_t(c)] = sums[std::size_t(c)] / double(counts[std::size_t(c)]);

    if (!changed) break;
    if (res.inertia.size() >= 2) {
      const double prev = res.inertia[res.inertia.size() - 2];
      if (prev > 0 && std::abs(prev - inertia) / prev < 1e-6) break;
    }
  }
  return res;
}

/// K-means over every ingested region, as assignments labelled `km_<cluster>`.
inline std::vector<Assignment> kmeans_baseline(const Corpus& corpus, int k, std::uint64_t seed) {
  std::vector<Vec> points;
  std::vector<const RegionRecord*> regions;
  for (const auto& im : corpus.images)
    for (const auto& r : im.regions) {
      points.push_back(to_vec(r.feature));
      regions.push_back(&r);
    }
  auto res = kmeans(points, k, seed);
  std::vector<Assignment> out;
  out.reserve(regions.size());
  for (std::size_t i = 0; i < regions.size(); ++i)
    out.emplace_back(regions[i]->region_id, "km_" + std::to_string(res.assignment[i]));
  return out;
}

}  // namespace dualmem
