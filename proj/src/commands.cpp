// Copyright 2026 The evipan Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "evipan/commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <ostream>
#include <set>
#include <thread>

#include "evipan/errors.hpp"
#include "evipan/gradcheck.hpp"

namespace evipan {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kManifestFormat = "evipan-dataset";
constexpr int kManifestVersion = 1;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Runs fn(i) for i in [0, n). In parallel mode scenes are spread over
/// hardware threads; each call writes only its own slot, so results do not
/// depend on scheduling. The first exception is rethrown.
template <typename Fn>
void for_each_index(std::size_t n, bool parallel, Fn&& fn) {
  const std::size_t workers =
      parallel ? std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency())) : 1;
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      fn(i);
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) {
            error = std::current_exception();
          }
        }
      }
    });
  }
  for (auto& t : threads) {
    t.join();
  }
  if (error) {
    std::rethrow_exception(error);
  }
}

void make_parent(const fs::path& path) {
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  make_parent(path);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
}

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, v);
  return buf;
}

json manifest_entries(const std::vector<ManifestScene>& scenes) {
  json arr = json::array();
  for (const auto& s : scenes) {
    arr.push_back({{"id", s.id}, {"seed", s.seed}, {"points", s.points}, {"labels", s.labels}});
  }
  return arr;
}

std::vector<ManifestScene> parse_entries(const json& arr) {
  std::vector<ManifestScene> out;
  for (const auto& e : arr) {
    out.push_back(ManifestScene{e.at("id").get<std::string>(), e.at("seed").get<std::uint64_t>(),
                                e.at("points").get<std::string>(),
                                e.at("labels").get<std::string>()});
  }
  return out;
}

Scene load_scene(const fs::path& data_dir, const ManifestScene& entry) {
  Scene s = read_kitti_scene(data_dir / entry.points, data_dir / entry.labels);
  s.scene_id = entry.id;
  return s;
}

/// Remapped scene and its voxel grid with majority-vote targets.
struct LabeledScene {
  Scene scene;
  VoxelGrid grid;
};

LabeledScene labeled_scene(const fs::path& data_dir, const ManifestScene& entry,
                           const Vocabulary& vocab, LabelSplit split, const GridSpec& spec) {
  LabeledScene out;
  out.scene = remap_labels(load_scene(data_dir, entry), vocab, split);
  out.grid = majority_vote_targets(voxelize(out.scene, spec), out.scene.labels);
  return out;
}

std::vector<LabeledScene> load_split(const RunConfig& cfg, const std::vector<ManifestScene>& entries,
                                     const Vocabulary& vocab, LabelSplit split) {
  std::vector<LabeledScene> out(entries.size());
  for_each_index(entries.size(), cfg.parallel, [&](std::size_t i) {
    out[i] = labeled_scene(cfg.data_dir, entries[i], vocab, split, cfg.grid);
  });
  return out;
}

std::vector<TrainingSample> training_samples(const RunConfig& cfg, const Manifest& manifest,
                                             const Vocabulary& vocab) {
  if (manifest.train.empty()) {
    throw EmptySceneError("the dataset has no training scenes");
  }
  std::vector<TrainingSample> out(manifest.train.size());
  for_each_index(manifest.train.size(), cfg.parallel, [&](std::size_t i) {
    const auto s = labeled_scene(cfg.data_dir, manifest.train[i], vocab, LabelSplit::kTrain, cfg.grid);
    out[i] = make_training_sample(s.grid, vocab, cfg.heatmap_sigma, cfg.include_unknown_instances);
  });
  return out;
}

std::vector<LabeledScene> eval_scenes(const RunConfig& cfg, const Manifest& manifest,
                                      const Vocabulary& vocab) {
  if (manifest.eval.empty()) {
    throw EmptySceneError("the dataset has no evaluation scenes");
  }
  return load_split(cfg, manifest.eval, vocab, LabelSplit::kEval);
}

struct EvalOutcome {
  MetricReport report;
  UncertaintySeparation separation;
};

EvalOutcome score(const RunConfig& cfg, const std::vector<PanopticPrediction>& preds,
                  const std::vector<LabeledScene>& gt, const Vocabulary& vocab) {
  MetricAccumulator acc(vocab);
  SeparationAccumulator sep(vocab.known_count());
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (cfg.eval_level == "point") {
      const auto el = point_elements(preds[i], gt[i].grid, gt[i].scene.labels, vocab);
      acc.add(el.pred, el.gt);
    } else {
      if (!(preds[i].spec == gt[i].grid.spec) || preds[i].voxels != gt[i].grid.voxels) {
        throw ShapeMismatchError("prediction for scene " + gt[i].scene.scene_id +
                                 " covers different voxels than its ground truth");
      }
      acc.add(prediction_elements(preds[i]), ground_truth_elements(gt[i].grid, vocab));
    }
    sep.add(preds[i], gt[i].grid);
  }
  return {acc.report(), sep.result()};
}

json loss_json(const LossBreakdown& l) {
  return {{"seg", l.seg},       {"uniform", l.uniform}, {"adaptive", l.adaptive},
          {"contrastive", l.contrastive}, {"center", l.center},   {"pull", l.pull},
          {"push", l.push},     {"proto", l.proto},     {"embed", l.embed},
          {"var_reg", l.var_reg}, {"total", l.total}};
}

json epoch_json(const EpochLog& log) {
  return {{"epoch", log.epoch},
          {"lr", log.lr},
          {"loss", loss_json(log.mean)},
          {"mu_known", log.mean.mu_known},
          {"mu_unknown", log.mean.mu_unknown},
          {"delta_u", log.mean.delta_u}};
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

HeadParams load_compatible_checkpoint(const RunConfig& cfg, const Vocabulary& vocab) {
  HeadParams params = load_checkpoint(cfg.checkpoint);
  if (params.num_classes() != vocab.known_count()) {
    throw ShapeMismatchError("checkpoint " + cfg.checkpoint + " has K=" +
                             std::to_string(params.num_classes()) + " but the vocabulary has " +
                             std::to_string(vocab.known_count()) + " known classes");
  }
  if (params.d_in() != kFeatureDim) {
    throw ShapeMismatchError("checkpoint " + cfg.checkpoint + " has D_in=" +
                             std::to_string(params.d_in()) + ", expected " +
                             std::to_string(kFeatureDim));
  }
  return params;
}

fs::path prediction_path(const RunConfig& cfg, const std::string& id) {
  return fs::path(cfg.predictions_dir) / (id + ".pred");
}

}  // namespace

// ---------------------------------------------------------------------------
// Shared helpers

std::uint64_t scene_seed(std::uint64_t seed, int split, std::uint64_t index) {
  return splitmix64(splitmix64(seed) ^ splitmix64((static_cast<std::uint64_t>(split) << 32) + index));
}

Manifest read_manifest(const fs::path& data_dir) {
  const fs::path path = data_dir / "manifest.json";
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open dataset manifest " + path.string());
  }
  try {
    const json j = json::parse(in);
    if (j.at("format") != kManifestFormat || j.at("version") != kManifestVersion) {
      throw FormatError("unsupported dataset manifest " + path.string());
    }
    Manifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.train = parse_entries(j.at("train"));
    m.eval = parse_entries(j.at("eval"));
    return m;
  } catch (const json::exception& e) {
    throw FormatError("malformed dataset manifest " + path.string() + ": " + e.what());
  }
}

double auroc(std::span<const double> positive, std::span<const double> negative) {
  if (positive.empty() || negative.empty()) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  std::vector<std::pair<double, bool>> all;
  all.reserve(positive.size() + negative.size());
  for (double v : positive) {
    all.emplace_back(v, true);
  }
  for (double v : negative) {
    all.emplace_back(v, false);
  }
  std::sort(all.begin(), all.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) {
      ++j;
    }
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (all[k].second) {
        rank_sum += midrank;
      }
    }
    i = j;
  }
  const double np = static_cast<double>(positive.size());
  const double nn = static_cast<double>(negative.size());
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

nlohmann::json UncertaintySeparation::to_json() const {
  return {{"mu_known", mu_known}, {"mu_unknown", mu_unknown}, {"delta_u", delta_u},
          {"AUROC", auroc},       {"known_voxels", known},   {"unknown_voxels", unknown}};
}

void SeparationAccumulator::add(const PanopticPrediction& pred, const VoxelGrid& gt) {
  if (!(pred.spec == gt.spec) || pred.voxels != gt.voxels) {
    throw ShapeMismatchError("uncertainty separation: prediction and grid cover different voxels");
  }
  for (std::size_t row = 0; row < gt.size(); ++row) {
    const std::uint32_t s = gt.semantic_target[row];
    if (s < num_classes_) {
      known_.push_back(pred.records[row].uncertainty);
    } else if (s == kUnknownLabel) {
      unknown_.push_back(pred.records[row].uncertainty);
    }
  }
}

UncertaintySeparation SeparationAccumulator::result() const {
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) {
      s += x;
    }
    return v.empty() ? std::numeric_limits<double>::quiet_NaN() : s / static_cast<double>(v.size());
  };
  UncertaintySeparation r;
  r.known = known_.size();
  r.unknown = unknown_.size();
  r.mu_known = mean(known_);
  r.mu_unknown = mean(unknown_);
  r.delta_u = r.mu_unknown - r.mu_known;
  r.auroc = evipan::auroc(unknown_, known_);
  return r;
}

// ---------------------------------------------------------------------------
// synth

int cmd_synth(const RunConfig& cfg, std::ostream& out) {
  const fs::path root = cfg.data_dir;
  Manifest m;
  m.seed = cfg.seed;
  char name[32];
  for (int split = 0; split < 2; ++split) {
    const std::uint64_t n = split == 0 ? cfg.synth_train : cfg.synth_eval;
    auto& entries = split == 0 ? m.train : m.eval;
    const std::string dir = split == 0 ? "train" : "eval";
    for (std::uint64_t i = 0; i < n; ++i) {
      std::snprintf(name, sizeof(name), "%06llu", static_cast<unsigned long long>(i));
      entries.push_back(ManifestScene{dir + "_" + name, scene_seed(cfg.seed, split, i),
                                      dir + "/" + name + ".bin", dir + "/" + name + ".label"});
    }
    // Files from an earlier, larger run would make the directory differ.
    std::set<fs::path> keep;
    for (const auto& e : entries) {
      keep.insert(root / e.points);
      keep.insert(root / e.labels);
    }
    fs::create_directories(root / dir);
    for (const auto& f : fs::directory_iterator(root / dir)) {
      const auto ext = f.path().extension();
      if ((ext == ".bin" || ext == ".label") && !keep.count(f.path())) {
        fs::remove(f.path());
      }
    }
  }

  std::vector<const ManifestScene*> all;
  for (const auto& e : m.train) {
    all.push_back(&e);
  }
  for (const auto& e : m.eval) {
    all.push_back(&e);
  }
  std::vector<std::size_t> points(all.size());
  for_each_index(all.size(), cfg.parallel, [&](std::size_t i) {
    Scene s = generate_synthetic_scene(all[i]->seed, cfg.scene);
    s.scene_id = all[i]->id;
    write_kitti_scene(s, root / all[i]->points, root / all[i]->labels);
    points[i] = s.points.size();
  });

  const json manifest = {{"format", kManifestFormat},
                         {"version", kManifestVersion},
                         {"seed", m.seed},
                         {"scene", cfg.to_json().at("scene")},
                         {"train", manifest_entries(m.train)},
                         {"eval", manifest_entries(m.eval)}};
  write_text(root / "manifest.json", manifest.dump(2) + "\n");

  std::size_t total = 0;
  for (std::size_t p : points) {
    total += p;
  }
  out << "synth: wrote " << m.train.size() << " train + " << m.eval.size() << " eval scenes ("
      << total << " points) to " << root.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// voxelize

int cmd_voxelize(const RunConfig& cfg, std::ostream& out) {
  const Manifest m = read_manifest(cfg.data_dir);
  const Vocabulary vocab = cfg.vocabulary();
  struct Job {
    const ManifestScene* entry;
    LabelSplit split;
  };
  std::vector<Job> jobs;
  for (const auto& e : m.train) {
    jobs.push_back({&e, LabelSplit::kTrain});
  }
  for (const auto& e : m.eval) {
    jobs.push_back({&e, LabelSplit::kEval});
  }
  std::vector<std::size_t> voxels(jobs.size()), dropped(jobs.size());
  for_each_index(jobs.size(), cfg.parallel, [&](std::size_t i) {
    const auto s = labeled_scene(cfg.data_dir, *jobs[i].entry, vocab, jobs[i].split, cfg.grid);
    const GridSpec& g = s.grid.spec;
    std::string text = "evipan-voxels 1\n";
    text += "grid " + std::to_string(g.h) + " " + std::to_string(g.w) + " " + std::to_string(g.z) +
            " " + fmt("%.17g", g.r_min) + " " + fmt("%.17g", g.r_max) + " " +
            fmt("%.17g", g.z_min) + " " + fmt("%.17g", g.z_max) + "\n";
    text += "count " + std::to_string(s.grid.size()) + "\n";
    for (std::size_t row = 0; row < s.grid.size(); ++row) {
      const VoxelIndex v = s.grid.index_of_row(row);
      text += std::to_string(v.r) + " " + std::to_string(v.a) + " " + std::to_string(v.z) + " " +
              std::to_string(s.grid.occupancy[row]) + " " +
              std::to_string(s.grid.semantic_target[row]) + " " +
              std::to_string(s.grid.instance_target[row]) + "\n";
    }
    write_text(fs::path(cfg.voxels_dir) / (jobs[i].entry->id + ".vox"), text);
    voxels[i] = s.grid.size();
    dropped[i] = s.grid.dropped_points;
  });
  std::size_t nv = 0, nd = 0;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    nv += voxels[i];
    nd += dropped[i];
  }
  out << "voxelize: " << jobs.size() << " scenes, " << nv << " non-empty voxels, " << nd
      << " points outside the grid; wrote " << cfg.voxels_dir << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train

int cmd_train(const RunConfig& cfg, std::ostream& out) {
  const Manifest m = read_manifest(cfg.data_dir);
  const Vocabulary vocab = cfg.vocabulary();
  const auto samples = training_samples(cfg, m, vocab);

  make_parent(cfg.train_log);
  std::ofstream log(cfg.train_log, std::ios::binary | std::ios::trunc);
  std::ofstream stamps(cfg.train_log + ".time", std::ios::binary | std::ios::trunc);
  if (!log || !stamps) {
    throw IoError("cannot write training log " + cfg.train_log);
  }
  const auto t0 = std::chrono::steady_clock::now();
  stamps << json{{"event", "start"}, {"utc", utc_now()}}.dump() << "\n";
  const TrainResult result = train(samples, vocab.known_count(), cfg.train, [&](const EpochLog& e) {
    log << epoch_json(e).dump() << "\n";
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    stamps << json{{"epoch", e.epoch}, {"elapsed_s", secs}, {"utc", utc_now()}}.dump() << "\n";
  });
  log.flush();
  stamps.flush();

  make_parent(cfg.checkpoint);
  save_checkpoint(result.params, cfg.checkpoint);

  out << "train: " << samples.size() << " scenes, " << cfg.train.epochs << " epochs, "
      << result.params.size() << " parameters\n";
  if (!result.log.empty()) {
    const auto& last = result.log.back().mean;
    out << "  final loss " << fmt("%.6f", last.total) << "  mu_known " << fmt("%.4f", last.mu_known)
        << "  mu_unknown " << fmt("%.4f", last.mu_unknown) << "\n";
  }
  out << "  checkpoint " << cfg.checkpoint << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// infer

int cmd_infer(const RunConfig& cfg, std::ostream& out) {
  const Manifest m = read_manifest(cfg.data_dir);
  const Vocabulary vocab = cfg.vocabulary();
  const HeadParams params = load_compatible_checkpoint(cfg, vocab);
  if (m.eval.empty()) {
    throw EmptySceneError("the dataset has no evaluation scenes");
  }
  fs::create_directories(cfg.predictions_dir);
  std::vector<std::size_t> unknown(m.eval.size()), total(m.eval.size());
  for_each_index(m.eval.size(), cfg.parallel, [&](std::size_t i) {
    const Scene scene = load_scene(cfg.data_dir, m.eval[i]);
    const VoxelGrid grid = voxelize(scene, cfg.grid);
    const PanopticPrediction pred = infer_scene(params, grid, vocab, cfg.infer);
    if (cfg.infer_format == "binary") {
      write_prediction_binary(pred, prediction_path(cfg, m.eval[i].id));
    } else {
      write_prediction_text(pred, prediction_path(cfg, m.eval[i].id));
    }
    total[i] = pred.size();
    unknown[i] = static_cast<std::size_t>(
        std::count_if(pred.records.begin(), pred.records.end(), [](const VoxelPrediction& r) {
          return r.kind == VoxelKind::kUnknown || r.kind == VoxelKind::kUnknownNoise;
        }));
  });
  std::size_t nt = 0, nu = 0;
  for (std::size_t i = 0; i < total.size(); ++i) {
    nt += total[i];
    nu += unknown[i];
  }
  out << "infer: " << m.eval.size() << " scenes, " << nt << " voxels, " << nu
      << " flagged unknown; wrote " << cfg.predictions_dir << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

int cmd_eval(const RunConfig& cfg, std::ostream& out) {
  const Manifest m = read_manifest(cfg.data_dir);
  const Vocabulary vocab = cfg.vocabulary();
  if (!fs::is_directory(cfg.predictions_dir) || fs::is_empty(cfg.predictions_dir)) {
    throw IoError("no predictions found in " + cfg.predictions_dir);
  }
  const auto gt = eval_scenes(cfg, m, vocab);
  std::vector<PanopticPrediction> preds(gt.size());
  for_each_index(gt.size(), cfg.parallel, [&](std::size_t i) {
    preds[i] = read_prediction(prediction_path(cfg, m.eval[i].id));
  });
  const EvalOutcome r = score(cfg, preds, gt, vocab);

  json report = r.report.to_json();
  report["level"] = cfg.eval_level;
  report["uncertainty"] = r.separation.to_json();
  write_text(cfg.report, report.dump(2) + "\n");
  fs::path table = cfg.report;
  table.replace_extension(".tsv");
  write_text(table, r.report.to_table());

  out << "eval: " << r.report.scenes << " scenes (" << cfg.eval_level << " level)\n"
      << "  PQ " << fmt("%.4f", r.report.pq) << "  PQ_Th " << fmt("%.4f", r.report.pq_th)
      << "  PQ_St " << fmt("%.4f", r.report.pq_st) << "  SQ " << fmt("%.4f", r.report.sq)
      << "  RQ " << fmt("%.4f", r.report.rq) << "\n"
      << "  UQ " << fmt("%.4f", r.report.unknown.uq) << "  Recall "
      << fmt("%.4f", r.report.unknown.recall) << "  SQ_unknown "
      << fmt("%.4f", r.report.unknown.sq) << "\n"
      << "  delta_u " << fmt("%.4f", r.separation.delta_u) << "  AUROC "
      << fmt("%.4f", r.separation.auroc) << "\n"
      << "  report " << cfg.report << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// gradcheck

int cmd_gradcheck(const RunConfig& cfg, std::ostream& out) {
  const auto results = run_gradient_checks(cfg.gradcheck);
  bool ok = true;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-22s %6s %11s %8s %14s  %s\n", "check", "cases", "components",
                "skipped", "max_rel_error", "result");
  out << buf;
  for (const auto& r : results) {
    std::snprintf(buf, sizeof(buf), "%-22s %6zu %11zu %8zu %14.3e  %s\n", r.name.c_str(), r.cases,
                  r.components, r.skipped, r.max_rel_error, r.passed ? "PASS" : "FAIL");
    out << buf;
    ok = ok && r.passed;
  }
  out << "gradcheck: " << (ok ? "all checks passed" : "FAILED") << " (tolerance "
      << fmt("%.0e", cfg.gradcheck.tolerance) << ")\n";
  return ok ? kExitOk : kExitCheckFailed;
}

// ---------------------------------------------------------------------------
// ablate

int cmd_ablate(const RunConfig& cfg, std::ostream& out) {
  const Manifest m = read_manifest(cfg.data_dir);
  const Vocabulary vocab = cfg.vocabulary();
  const auto samples = training_samples(cfg, m, vocab);
  const auto gt = eval_scenes(cfg, m, vocab);

  struct Variant {
    std::string name;
    SemanticMode mode;
    bool uniform, adaptive, contrastive;
  };
  const std::vector<Variant> variants = {
      {"softmax_entropy", SemanticMode::kSoftmax, false, false, false},
      {"dirichlet_seg", SemanticMode::kDirichlet, false, false, false},
      {"dirichlet_seg_uniform", SemanticMode::kDirichlet, true, false, false},
      {"dirichlet_seg_uniform_adaptive", SemanticMode::kDirichlet, true, true, false},
      {"dirichlet_full", SemanticMode::kDirichlet, true, true, true},
  };

  std::vector<EvalOutcome> results(variants.size());
  for_each_index(variants.size(), cfg.parallel, [&](std::size_t v) {
    TrainConfig tc = cfg.train;
    tc.mode = variants[v].mode;
    LossWeights& w = tc.objective.weights;
    w.uniform = variants[v].uniform ? w.uniform : 0.0;
    w.adaptive = variants[v].adaptive ? w.adaptive : 0.0;
    w.contrastive = variants[v].contrastive ? w.contrastive : 0.0;
    const HeadParams params = train(samples, vocab.known_count(), tc).params;
    std::vector<PanopticPrediction> preds;
    for (const auto& s : gt) {
      preds.push_back(infer_scene(params, s.grid, vocab, cfg.infer));
    }
    results[v] = score(cfg, preds, gt, vocab);
  });

  json rows = json::array();
  char buf[200];
  std::string table = "variant                          AUROC   delta_u      PQ      UQ\n";
  for (std::size_t v = 0; v < variants.size(); ++v) {
    const auto& r = results[v];
    rows.push_back({{"variant", variants[v].name},
                    {"mode", variants[v].mode == SemanticMode::kSoftmax ? "softmax" : "dirichlet"},
                    {"AUROC", r.separation.auroc},
                    {"delta_u", r.separation.delta_u},
                    {"mu_known", r.separation.mu_known},
                    {"mu_unknown", r.separation.mu_unknown},
                    {"PQ", r.report.pq},
                    {"UQ", r.report.unknown.uq},
                    {"unknown_recall", r.report.unknown.recall}});
    std::snprintf(buf, sizeof(buf), "%-30s %7.4f %9.4f %7.4f %7.4f\n", variants[v].name.c_str(),
                  r.separation.auroc, r.separation.delta_u, r.report.pq, r.report.unknown.uq);
    table += buf;
  }
  bool uq_monotone = true;
  for (std::size_t v = 2; v < variants.size(); ++v) {
    uq_monotone = uq_monotone && results[v].report.unknown.uq >= results[v - 1].report.unknown.uq;
  }
  const bool auroc_order = results[4].separation.auroc > results[0].separation.auroc;
  const json report = {{"seed", cfg.seed},
                       {"epochs", cfg.train.epochs},
                       {"variants", rows},
                       {"checks",
                        {{"auroc_dirichlet_full_above_softmax", auroc_order},
                         {"uq_non_decreasing_over_loss_ladder", uq_monotone}}}};
  write_text(cfg.ablation_report, report.dump(2) + "\n");
  out << table << "AUROC(dirichlet_full) > AUROC(softmax_entropy): " << (auroc_order ? "yes" : "no")
      << "\nUQ non-decreasing over the loss ladder: " << (uq_monotone ? "yes" : "no") << "\n"
      << "ablate: wrote " << cfg.ablation_report << "\n";
  return kExitOk;
}

}  // namespace evipan
