// Copyright (c) 2026, The dualmem Authors
// SPDX-License-Identifier: Apache-2.0

// dualmem: generate synthetic corpora, estimate background statistics, run
// discovery, evaluate assignments and run the k-means baseline.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dualmem/dualmem.hpp"

namespace fs = std::filesystem;
using namespace dualmem;

namespace {

struct CommonOptions {
  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  bool force = false;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool with_config = true) {
  if (with_config) cmd->add_option("--config", o.config_path, "Config file (key = value)")->check(CLI::ExistingFile);
  cmd->add_option("--out", o.out, "Output directory")->required();
  cmd->add_option("--seed", o.seed, "Seed for every random choice in this invocation");
  cmd->add_option("--threads", o.threads, "Worker threads where parallelism is safe")->check(CLI::PositiveNumber);
  cmd->add_flag("--force", o.force, "Overwrite a non-empty output directory");
}

void prepare_out_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw Error(ErrorKind::Io, "'" + dir.string() + "' exists and is not a directory");
    if (!fs::is_empty(dir)) {
      if (!force) throw Error(ErrorKind::Io, "output directory '" + dir.string() + "' is not empty (use --force)");
      for (const auto& entry : fs::directory_iterator(dir)) fs::remove_all(entry.path());
    }
  }
  fs::create_directories(dir);
}

/// Written first into every output directory.
void write_manifest(const fs::path& dir, const std::string& subcommand, const std::string& config_path,
                    const std::vector<std::pair<std::string, std::string>>& inputs, const std::string& params) {
  nlohmann::json j;
  j["subcommand"] = subcommand;
  j["config_path"] = config_path;
  j["inputs"] = nlohmann::json::object();
  for (const auto& [k, v] : inputs) j["inputs"][k] = v;
  j["out"] = dir.string();
  j["tool_version"] = kVersion;
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(detail::fnv1a(params)));
  j["config_hash"] = hash;
  io::write_file(dir / "manifest.json", j.dump(2) + "\n");
}

Config load_config_or_default(const std::string& path) { return path.empty() ? Config{} : load_config(path); }

int cmd_gen(const std::string& spec_path, const CommonOptions& o, bool binary) {
  auto spec = parse_synth_spec(io::read_file(spec_path));
  if (o.seed) spec.seed = *o.seed;
  const fs::path dir(o.out);
  prepare_out_dir(dir, o.force);
  write_manifest(dir, "gen", "", {{"spec", spec_path}}, io::read_file(spec_path) + "\nseed=" + std::to_string(spec.seed));
  auto synth = generate(spec, o.threads);
  write_region_file(dir / (binary ? "corpus.bin" : "corpus.jsonl"), synth.corpus, binary);
  write_ground_truth(dir / "gt.jsonl", synth.gt);
  write_region_file(dir / "priors.jsonl", synth.priors);
  write_ground_truth(dir / "priors_gt.jsonl", synth.priors_gt);
  std::cout << "generated " << synth.corpus.records.size() << " regions in " << spec.images << " images -> " << dir << '\n';
  return 0;
}

int cmd_background(const std::string& corpus_path, const CommonOptions& o) {
  const Config config = load_config_or_default(o.config_path);
  const fs::path dir(o.out);
  prepare_out_dir(dir, o.force);
  write_manifest(dir, "background", o.config_path, {{"corpus", corpus_path}}, to_text(config));
  const Corpus corpus = ingest_corpus(corpus_path, config);
  std::vector<const RegionRecord*> regions;
  for (const auto& im : corpus.images)
    for (const auto& r : im.regions) regions.push_back(&r);
  auto acc = accumulate_chunked(regions, corpus.d, o.threads, [](const RegionRecord* r) { return to_vec(r->feature); });
  auto bg = finalize_background(acc, config.ridge_lambda);
  write_background(dir / "bg.bin", bg);
  std::cout << "background from " << bg.pi_neg << " regions, d = " << bg.dim() << " -> " << dir / "bg.bin" << '\n';
  return 0;
}

int cmd_discover(const std::string& corpus_path, const std::string& bg_path, const std::string& priors_path,
                 const std::string& priors_gt_path, const CommonOptions& o) {
  Config config = load_config_or_default(o.config_path);
  if (o.seed) config.rng_seed = *o.seed;
  validate(config);
  const fs::path dir(o.out);
  prepare_out_dir(dir, o.force);
  write_manifest(dir, "discover", o.config_path,
                 {{"corpus", corpus_path}, {"bg", bg_path}, {"priors", priors_path}, {"priors_gt", priors_gt_path}},
                 to_text(config) + io::read_file(bg_path));
  io::write_file(dir / "config.txt", to_text(config));
  fs::copy_file(bg_path, dir / "bg.bin", fs::copy_options::overwrite_existing);

  const Corpus corpus = ingest_corpus(corpus_path, config);
  auto bg = std::make_shared<const BackgroundStats>(read_background(bg_path));

  std::vector<SemanticPrior> priors;
  if (config.init_mode != InitMode::Null) {
    if (priors_path.empty()) throw Error(ErrorKind::InvalidArgument, "--priors is required unless init_mode = null");
    auto prior_file = read_region_file(priors_path);
    if (prior_file.d != corpus.d) throw Error(ErrorKind::DimensionMismatch, "priors d does not match corpus d");
    if (config.normalize_features)
      for (auto& r : prior_file.records) l2_normalize(r.feature);
    if (config.init_mode == InitMode::DetScores) {
      priors = select_det_score_priors(prior_file.records, config.semantic_prior_score);
    } else {
      if (priors_gt_path.empty()) throw Error(ErrorKind::InvalidArgument, "--priors-gt is required for init_mode = gt_overlap");
      priors = select_gt_overlap_priors(prior_file.records, read_ground_truth(priors_gt_path));
    }
  }

  auto observer = [&](const RoundState& state, const ConsolidationReport& report) {
    const fs::path round_dir = dir / ("round_" + std::to_string(report.round));
    fs::create_directories(round_dir);
    io::write_file(round_dir / "checkpoint.bin", checkpoint_to_bytes(state.mem));
    io::write_file(round_dir / "consolidation.log", report.to_json().dump() + "\n");
  };
  auto result = run_discovery(config, corpus, bg, priors, observer);
  io::write_file(dir / "assignments.tsv", assignments_to_tsv(result.assignments));
  io::write_file(dir / "stats.txt", stats_to_text(result.state));
  std::cout << stats_to_text(result.state);
  return 0;
}

int cmd_eval(const std::string& assignments_path, const std::string& corpus_path, const std::string& gt_path,
             const std::vector<double>& thresholds, int min_images, double purity_floor, int corret_k,
             const std::string& corret_mode, const CommonOptions& o) {
  const Config config = load_config_or_default(o.config_path);
  const fs::path dir(o.out);
  prepare_out_dir(dir, o.force);
  std::string params = to_text(config);
  for (double t : thresholds) params += threshold_tag(t) + ",";
  params += std::to_string(min_images) + "," + detail::format_double(purity_floor) + "," + std::to_string(corret_k) + corret_mode;
  write_manifest(dir, "eval", o.config_path, {{"assignments", assignments_path}, {"corpus", corpus_path}, {"gt", gt_path}}, params);

  const Corpus corpus = ingest_corpus(corpus_path, config);
  const auto assignments = parse_assignments(io::read_file(assignments_path));
  const GroundTruthIndex gt(read_ground_truth(gt_path));
  EvalOptions opt;
  opt.thresholds = thresholds;
  opt.min_images = min_images;
  opt.purity_floor = purity_floor;
  opt.corret_k = corret_k;
  opt.corret_mode = corret_mode == "shared_slot" ? CorRetMode::SharedSlot : CorRetMode::FeatureCosine;
  const auto clusters = clusters_from_assignments(assignments, corpus);
  const auto report = evaluate(clusters, gt, opt);
  io::write_file(dir / "metrics.txt", metrics_to_text(report));
  std::string table = "label\tsize\timage_span\tpurity\tmajority_class\n";
  for (const auto& c : clusters) {
    auto rep = report_cluster(c, gt, opt.thresholds.empty() ? 0.5 : opt.thresholds.front());
    table += rep.label + "\t" + std::to_string(rep.size) + "\t" + std::to_string(rep.image_span) + "\t" +
             detail::format_double(rep.purity) + "\t" + rep.majority_class + "\n";
  }
  io::write_file(dir / "clusters.tsv", table);
  for (const auto& [t, curve] : report.curves) io::write_file(dir / ("curve_" + threshold_tag(t) + ".csv"), curve_to_csv(curve));
  std::cout << metrics_to_text(report);
  return 0;
}

int cmd_baseline(const std::string& corpus_path, std::optional<int> k, const std::string& stats_path, const CommonOptions& o) {
  const Config config = load_config_or_default(o.config_path);
  if (!k) {
    if (stats_path.empty()) throw Error(ErrorKind::InvalidArgument, "baseline needs --k or --stats");
    auto kv = parse_key_values(io::read_file(stats_path));
    auto it = kv.find("n_discovered_slots");
    if (it == kv.end()) throw Error(ErrorKind::Format, "stats file has no n_discovered_slots");
    k = detail::parse_number<int>("n_discovered_slots", it->second);
  }
  const std::uint64_t seed = o.seed.value_or(config.rng_seed);
  const fs::path dir(o.out);
  prepare_out_dir(dir, o.force);
  write_manifest(dir, "baseline", o.config_path, {{"corpus", corpus_path}, {"stats", stats_path}},
                 to_text(config) + "k=" + std::to_string(*k) + ",seed=" + std::to_string(seed));
  const Corpus corpus = ingest_corpus(corpus_path, config);
  io::write_file(dir / "assignments.tsv", assignments_to_tsv(kmeans_baseline(corpus, *k, seed)));
  std::cout << "k-means with k = " << *k << " over " << corpus.region_count() << " regions -> " << dir / "assignments.tsv" << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dualmem: novel category discovery with a dual memory"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  CommonOptions gen_o, bg_o, disc_o, eval_o, base_o;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic corpus");
  std::string spec_path;
  bool gen_binary = false;
  gen->add_option("--spec", spec_path, "Synthetic spec file (key = value)")->required()->check(CLI::ExistingFile);
  gen->add_flag("--binary", gen_binary, "Write the corpus in the DMRF binary format");
  add_common(gen, gen_o, false);

  auto* bgc = app.add_subcommand("background", "Estimate background statistics");
  std::string bg_corpus;
  bgc->add_option("--corpus", bg_corpus, "Region record file")->required()->check(CLI::ExistingFile);
  add_common(bgc, bg_o);

  auto* disc = app.add_subcommand("discover", "Run never-ending discovery");
  std::string d_corpus, d_bg, d_priors, d_priors_gt;
  disc->add_option("--corpus", d_corpus, "Region record file")->required()->check(CLI::ExistingFile);
  disc->add_option("--bg", d_bg, "Background statistics (bg.bin)")->required()->check(CLI::ExistingFile);
  disc->add_option("--priors", d_priors, "Prior detections (region record file)")->check(CLI::ExistingFile);
  disc->add_option("--priors-gt", d_priors_gt, "Ground truth of the prior images (gt_overlap init)")->check(CLI::ExistingFile);
  add_common(disc, disc_o);

  auto* ev = app.add_subcommand("eval", "Evaluate an assignment file");
  std::string e_assign, e_corpus, e_gt, e_corret_mode = "feature_cosine";
  std::vector<double> e_thresholds{0.5, 0.2};
  int e_min_images = 5, e_corret_k = 10;
  double e_purity_floor = 0.5;
  ev->add_option("--assignments", e_assign, "assignments.tsv")->required()->check(CLI::ExistingFile);
  ev->add_option("--corpus", e_corpus, "Region record file")->required()->check(CLI::ExistingFile);
  ev->add_option("--gt", e_gt, "Ground-truth file")->required()->check(CLI::ExistingFile);
  ev->add_option("--thresholds", e_thresholds, "IoU thresholds")->delimiter(',');
  ev->add_option("--min-images", e_min_images, "Minimum image span for discovered-class counting");
  ev->add_option("--purity-floor", e_purity_floor, "Minimum purity for discovered-class counting");
  ev->add_option("--corret-k", e_corret_k, "Neighbours for CorRet");
  ev->add_option("--corret-mode", e_corret_mode, "feature_cosine | shared_slot")
      ->check(CLI::IsMember({"feature_cosine", "shared_slot"}));
  add_common(ev, eval_o);

  auto* base = app.add_subcommand("baseline", "K-means baseline");
  std::string b_corpus, b_stats;
  std::optional<int> b_k;
  base->add_option("--corpus", b_corpus, "Region record file")->required()->check(CLI::ExistingFile);
  base->add_option("--k", b_k, "Number of clusters");
  base->add_option("--stats", b_stats, "stats.txt of a discovery run; k = n_discovered_slots")->check(CLI::ExistingFile);
  add_common(base, base_o);

  auto* conv = app.add_subcommand("convert", "Convert a region file between JSONL and DMRF binary");
  std::string c_in, c_out;
  conv->add_option("--in", c_in, "Input region file")->required()->check(CLI::ExistingFile);
  conv->add_option("--out", c_out, "Output file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_gen(spec_path, gen_o, gen_binary);
    if (*bgc) return cmd_background(bg_corpus, bg_o);
    if (*disc) return cmd_discover(d_corpus, d_bg, d_priors, d_priors_gt, disc_o);
    if (*ev) return cmd_eval(e_assign, e_corpus, e_gt, e_thresholds, e_min_images, e_purity_floor, e_corret_k, e_corret_mode, eval_o);
    if (*base) return cmd_baseline(b_corpus, b_k, b_stats, base_o);
    if (*conv) {
      convert_region_file(c_in, c_out);
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
