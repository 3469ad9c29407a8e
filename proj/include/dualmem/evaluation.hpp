// Copyright (c) 2026, The dualmem Authors
// SPDX-License-Identifier: Apache-2.0

// Discovery metrics: cluster purity, ground-truth coverage, the cumulative
// purity vs coverage curve and its area, CorLoc, CorRet, DetRate, oracle
// majority-vote labelling and the discovered-class count.

#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "dualmem/pipeline.hpp"

namespace dualmem {

inline constexpr const char* kBackgroundClass = "background";

/// Ground-truth boxes grouped by image.
class GroundTruthIndex {
 public:
  GroundTruthIndex() = default;
  explicit GroundTruthIndex(const std::vector<GroundTruthBox>& gt) : boxes_(gt) {
    for (std::size_t i = 0; i < boxes_.size(); ++i) by_image_[boxes_[i].image_id].push_back(i);
  }

  const std::vector<GroundTruthBox>& boxes() const { return boxes_; }

  std::vector<std::size_t> in_image(const std::string& image_id) const {
    auto it = by_image_.find(image_id);
    return it == by_image_.end() ? std::vector<std::size_t>{} : it->second;
  }

  const std::map<std::string, std::vector<std::size_t>>& by_image() const { return by_image_; }

 private:
  std::vector<GroundTruthBox> boxes_;
  std::map<std::string, std::vector<std::size_t>> by_image_;
};

/// Which ground-truth classes coverage is measured over.
enum class ClassSet { Unknown, Known, All };

inline bool in_class_set(const GroundTruthBox& g, ClassSet set) {
  switch (set) {
    case ClassSet::Unknown: return !g.known_flag;
    case ClassSet::Known: return g.known_flag;
    case ClassSet::All: return true;
  }
  return true;
}

struct Cluster {
  std::string label;
  std::vector<const RegionRecord*> members;
};

/// Groups assigned regions by label (ascending), skipping `unassigned`.
inline std::vector<Cluster> clusters_from_assignments(const std::vector<Assignment>& assignments, const Corpus& corpus) {
  std::unordered_map<std::string, const RegionRecord*> by_id;
  for (const auto& im : corpus.images)
    for (const auto& r : im.regions) by_id.emplace(r.region_id, &r);
  std::map<std::string, std::vector<const RegionRecord*>> grouped;
  for (const auto& [region, label] : assignments) {
    if (label == kUnassigned) continue;
    auto it = by_id.find(region);
    if (it == by_id.end()) throw Error(ErrorKind::InvalidArgument, "assignment references unknown region '" + region + "'");
    grouped[label].push_back(it->second);
  }
  std::vector<Cluster> out;
  for (auto& [label, members] : grouped) out.push_back({label, std::move(members)});
  return out;
}

/// Class of the max-IoU ground-truth box in the region's image if that IoU
/// reaches the threshold; nullopt means background.
inline std::optional<std::string> label_region(const RegionRecord& region, const GroundTruthIndex& gt, double iou_threshold) {
  double best = -1;
  const GroundTruthBox* hit = nullptr;
  for (auto i : gt.in_image(region.image_id)) {
    const auto& g = gt.boxes()[i];
    const double v = iou(region.box, g.box);
    if (v > best) best = v, hit = &g;
  }
  if (hit && best >= iou_threshold) return hit->class_name;
  return std::nullopt;
}

struct PurityResult {
  double purity = 0;
  std::string majority_class;  // `background` when no member is labelled
};

inline PurityResult purity(const Cluster& cluster, const GroundTruthIndex& gt, double iou_threshold) {
  if (cluster.members.empty()) throw Error(ErrorKind::EmptyInput, "purity: cluster '" + cluster.label + "' is empty");
  std::map<std::string, std::size_t> counts;
  for (const auto* r : cluster.members)
    if (auto c = label_region(*r, gt, iou_threshold)) ++counts[*c];
  PurityResult out{0.0, kBackgroundClass};
  std::size_t best = 0;
  for (const auto& [cls, n] : counts)  // ascending names: ties keep the smallest
    if (n > best) best = n, out.majority_class = cls;
  out.purity = double(best) / double(cluster.members.size());
  return out;
}

namespace detail {

/// Incremental ground-truth coverage bookkeeping.
class CoverageTracker {
 public:
  CoverageTracker(const GroundTruthIndex& gt, double iou_threshold, ClassSet set)
      : gt_(gt), threshold_(iou_threshold), set_(set), covered_(gt.boxes().size(), false) {
    for (const auto& g : gt.boxes())
      if (in_class_set(g, set)) ++total_;
  }

  void add(const RegionRecord& r) {
    for (auto i : gt_.in_image(r.image_id)) {
      if (covered_[i] || !in_class_set(gt_.boxes()[i], set_)) continue;
      if (iou(r.box, gt_.boxes()[i].box) >= threshold_) {
        covered_[i] = true;
        ++hits_;
      }
    }
  }

  double fraction() const { return total_ == 0 ? 0.0 : double(hits_) / double(total_); }
  std::size_t hits() const { return hits_; }
  std::size_t total() const { return total_; }

 private:
  const GroundTruthIndex& gt_;
  double threshold_;
  ClassSet set_;
  std::vector<bool> covered_;
  std::size_t total_ = 0;
  std::size_t hits_ = 0;
};

}  // namespace detail

/// Fraction of ground-truth boxes in `set` matched (IoU >= threshold) by at
/// least one clustered region.
inline double coverage(const std::vector<Cluster>& clusters, const GroundTruthIndex& gt, double iou_threshold,
                       ClassSet set = ClassSet::Unknown) {
  detail::CoverageTracker tracker(gt, iou_threshold, set);
  for (const auto& c : clusters)
    for (const auto* r : c.members) tracker.add(*r);
  return tracker.fraction();
}

struct CurvePoint {
  double coverage = 0;
  double cumulative_purity = 0;
};

/// Clusters sorted by purity (descending, label as tiebreak); point k pairs
/// the coverage of the top-k clusters with their mean purity.
inline std::vector<CurvePoint> cumulative_purity_curve(const std::vector<Cluster>& clusters, const GroundTruthIndex& gt,
                                                       double iou_threshold, ClassSet set = ClassSet::Unknown) {
  std::vector<std::pair<double, const Cluster*>> ranked;
  ranked.reserve(clusters.size());
  for (const auto& c : clusters) ranked.emplace_back(purity(c, gt, iou_threshold).purity, &c);
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second->label < b.second->label;
  });
  std::vector<CurvePoint> curve;
  detail::CoverageTracker tracker(gt, iou_threshold, set);
  double sum = 0;
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    sum += ranked[k].first;
    for (const auto* r : ranked[k].second->members) tracker.add(*r);
    curve.push_back({tracker.fraction(), sum / double(k + 1)});
  }
  return curve;
}

/// Trapezoidal area under the curve over coverage, anchored at (0, y1), in percent.
inline double auc(const std::vector<CurvePoint>& curve) {
  if (curve.empty()) return 0.0;
  double area = 0;
  CurvePoint prev{0.0, curve.front().cumulative_purity};
  for (const auto& p : curve) {
    area += (p.coverage - prev.coverage) * 0.5 * (p.cumulative_purity + prev.cumulative_purity);
    prev = p;
  }
  return 100.0 * area;
}

/// Percentage of images with ground truth in which some clustered region has
/// IoU > 0.5 with some ground-truth box.
inline double corloc(const std::vector<Cluster>& clusters, const GroundTruthIndex& gt) {
  if (gt.by_image().empty()) return 0.0;
  std::set<std::string> localized;
  for (const auto& c : clusters)
    for (const auto* r : c.members) {
      if (localized.count(r->image_id)) continue;
      for (auto i : gt.in_image(r->image_id))
        if (iou(r->box, gt.boxes()[i].box) > 0.5) {
          localized.insert(r->image_id);
          break;
        }
    }
  return 100.0 * double(localized.size()) / double(gt.by_image().size());
}

/// Recall of all ground-truth boxes by clustered regions at the threshold, in percent.
inline double detrate(const std::vector<Cluster>& clusters, const GroundTruthIndex& gt, double iou_threshold) {
  return 100.0 * coverage(clusters, gt, iou_threshold, ClassSet::All);
}

enum class CorRetMode {
  FeatureCosine,  // mean assigned-region feature per image, cosine neighbours
  SharedSlot,     // Jaccard overlap of the cluster labels present in each image
};

struct CorRetResult {
  double value = 0;
  std::size_t images_used = 0;
  std::size_t images_skipped = 0;  // ground-truth images without assigned regions
};

/// Majority ground-truth class of an image (ties: lexicographically smallest).
inline std::optional<std::string> image_class(const GroundTruthIndex& gt, const std::string& image_id) {
  std::map<std::string, std::size_t> counts;
  for (auto i : gt.in_image(image_id)) ++counts[gt.boxes()[i].class_name];
  std::optional<std::string> best;
  std::size_t n = 0;
  for (const auto& [cls, c] : counts)
    if (c > n) n = c, best = cls;
  return best;
}

/// Mean percentage of each image's k nearest neighbours that share its class.
inline CorRetResult corret(const std::vector<Cluster>& clusters, const GroundTruthIndex& gt, int k = 10,
                           CorRetMode mode = CorRetMode::FeatureCosine) {
  struct ImageEntry {
    Vec sum;
    std::size_t n = 0;
    std::set<std::string> labels;
  };
  std::map<std::string, ImageEntry> per_image;
  for (const auto& c : clusters)
    for (const auto* r : c.members) {
      auto& e = per_image[r->image_id];
      const Vec f = to_vec(r->feature);
      if (e.n == 0) e.sum = Vec::Zero(f.size());
      e.sum += f;
      ++e.n;
      e.labels.insert(c.label);
    }

  struct Item {
    std::string cls;
    Vec feature;
    const std::set<std::string>* labels;
  };
  std::vector<Item> items;
  CorRetResult result;
  for (const auto& [image_id, boxes] : gt.by_image()) {
    auto it = per_image.find(image_id);
    if (it == per_image.end()) {
      ++result.images_skipped;
      continue;
    }
    items.push_back({*image_class(gt, image_id), it->second.sum / double(it->second.n), &it->second.labels});
  }
  result.images_used = items.size();
  if (items.size() < 2 || k < 1) return result;

  auto similarity = [&](const Item& a, const Item& b) {
    if (mode == CorRetMode::FeatureCosine) return cosine_similarity(a.feature, b.feature);
    std::size_t inter = 0;
    for (const auto& l : *a.labels) inter += b.labels->count(l);
    const std::size_t uni = a.labels->size() + b.labels->size() - inter;
    return uni == 0 ? 0.0 : double(inter) / double(uni);
  };

  const std::size_t kk = std::min<std::size_t>(std::size_t(k), items.size() - 1);
  double total = 0;
  std::vector<std::pair<double, std::size_t>> sims;
  for (std::size_t i = 0; i < items.size(); ++i) {
    sims.clear();
    for (std::size_t j = 0; j < items.size(); ++j)
      if (j != i) sims.emplace_back(similarity(items[i], items[j]), j);
    std::partial_sort(sims.begin(), sims.begin() + std::ptrdiff_t(kk), sims.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    std::size_t same = 0;
    for (std::size_t m = 0; m < kk; ++m) same += items[sims[m].second].cls == items[i].cls;
    total += double(same) / double(kk);
  }
  result.value = 100.0 * total / double(items.size());
  return result;
}

/// Majority-vote class per cluster label (`background` when no member is labelled).
inline std::map<std::string, std::string> oracle_label_clusters(const std::vector<Cluster>& clusters,
                                                                const GroundTruthIndex& gt, double iou_threshold) {
  std::map<std::string, std::string> out;
  for (const auto& c : clusters) out[c.label] = purity(c, gt, iou_threshold).majority_class;
  return out;
}

struct ClusterReport {
  std::string label;
  std::size_t size = 0;
  std::size_t image_span = 0;
  double purity = 0;
  std::string majority_class;
};

inline ClusterReport report_cluster(const Cluster& c, const GroundTruthIndex& gt, double iou_threshold) {
  auto p = purity(c, gt, iou_threshold);
  std::set<std::string_view> images;
  for (const auto* r : c.members) images.insert(r->image_id);
  return {c.label, c.members.size(), images.size(), p.purity, p.majority_class};
}

/// Distinct unknown classes that are the majority class of at least one
/// cluster spanning >= min_images images with purity >= purity_floor.
inline int count_discovered(const std::vector<Cluster>& clusters, const GroundTruthIndex& gt, double iou_threshold,
                            double purity_floor = 0.5, int min_images = 5) {
  std::set<std::string> unknown;
  for (const auto& g : gt.boxes())
    if (!g.known_flag) unknown.insert(g.class_name);
  std::set<std::string> found;
  for (const auto& c : clusters) {
    auto rep = report_cluster(c, gt, iou_threshold);
    if (rep.image_span >= std::size_t(std::max(min_images, 0)) && rep.purity >= purity_floor && unknown.count(rep.majority_class))
      found.insert(rep.majority_class);
  }
  return static_cast<int>(found.size());
}

// ---------------------------------------------------------------------------

struct EvalOptions {
  std::vector<double> thresholds = {0.5, 0.2};
  int corret_k = 10;
  CorRetMode corret_mode = CorRetMode::FeatureCosine;
  double purity_floor = 0.5;
  int min_images = 5;
  ClassSet coverage_set = ClassSet::Unknown;
};

struct MetricsReport {
  std::vector<std::pair<std::string, double>> values;  // emitted in this order
  std::map<double, std::vector<CurvePoint>> curves;    // per IoU threshold

  double at(const std::string& key) const {
    for (const auto& [k, v] : values)
      if (k == key) return v;
    throw Error(ErrorKind::InvalidArgument, "no metric '" + key + "'");
  }
};

/// Threshold as it appears in metric keys and curve file names (0.5, 0.2).
inline std::string threshold_tag(double t) { return detail::format_double(t); }

inline MetricsReport evaluate(const std::vector<Cluster>& clusters, const GroundTruthIndex& gt, const EvalOptions& opt = {}) {
  MetricsReport rep;
  for (double t : opt.thresholds) {
    auto curve = cumulative_purity_curve(clusters, gt, t, opt.coverage_set);
    rep.values.emplace_back("auc_" + threshold_tag(t), auc(curve));
    rep.values.emplace_back("coverage_" + threshold_tag(t), coverage(clusters, gt, t, opt.coverage_set));
    rep.curves.emplace(t, std::move(curve));
  }
  rep.values.emplace_back("corloc", corloc(clusters, gt));
  auto cr = corret(clusters, gt, opt.corret_k, opt.corret_mode);
  rep.values.emplace_back("corret", cr.value);
  rep.values.emplace_back("corret_skipped_images", double(cr.images_skipped));
  for (double t : opt.thresholds) rep.values.emplace_back("detrate_" + threshold_tag(t), detrate(clusters, gt, t));
  const double primary = opt.thresholds.empty() ? 0.5 : opt.thresholds.front();
  rep.values.emplace_back("n_discovered", double(count_discovered(clusters, gt, primary, opt.purity_floor, opt.min_images)));
  rep.values.emplace_back("n_clusters", double(clusters.size()));
  return rep;
}

inline std::string metrics_to_text(const MetricsReport& rep) {
  std::ostringstream os;
  for (const auto& [k, v] : rep.values) os << k << " = " << detail::format_double(v) << '\n';
  return os.str();
}

inline std::string curve_to_csv(const std::vector<CurvePoint>& curve) {
  std::string out = "coverage,cumulative_purity\n";
  for (const auto& p : curve) out += detail::format_double(p.coverage) + "," + detail::format_double(p.cumulative_purity) + "\n";
  return out;
}

}  // namespace dualmem
