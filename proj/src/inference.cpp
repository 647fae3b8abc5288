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

#include "evipan/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <string>

#include "byte_io.hpp"
#include "evipan/errors.hpp"

namespace evipan {

void ThresholdConfig::validate() const {
  if (!(t >= 0.0) || !std::isfinite(t)) {
    throw ConfigError("infer.t must be finite and >= 0");
  }
  if (!(u_floor >= 0.0)) {
    throw ConfigError("infer.u_floor must be >= 0");
  }
}

void InferenceConfig::validate() const {
  threshold.validate();
  if (!(center_min_score > 0.0 && center_min_score < 1.0)) {
    throw ConfigError("infer.center_min_score must lie in (0, 1)");
  }
  if (center_top_k < 1) {
    throw ConfigError("infer.center_top_k must be >= 1");
  }
  if (!(center_merge_dist_sq >= 0.0)) {
    throw ConfigError("infer.center_merge_dist_sq must be >= 0");
  }
  if (!(dbscan_eps > 0.0)) {
    throw ConfigError("infer.dbscan_eps must be > 0");
  }
  if (dbscan_min_pts < 1) {
    throw ConfigError("infer.dbscan_min_pts must be >= 1");
  }
  if (!(heatmap_sigma > 0.0)) {
    throw ConfigError("heatmap.sigma_voxels must be > 0");
  }
}

UnknownSplit split_unknown(std::span<const double> uncertainty, const ThresholdConfig& cfg) {
  if (uncertainty.empty()) {
    throw EmptySceneError("split_unknown: no non-empty voxels");
  }
  UnknownSplit s;
  const double n = static_cast<double>(uncertainty.size());
  s.mean = std::accumulate(uncertainty.begin(), uncertainty.end(), 0.0) / n;
  double sq = 0.0;
  for (double u : uncertainty) {
    sq += (u - s.mean) * (u - s.mean);
  }
  s.stddev = std::sqrt(sq / n);
  s.threshold = std::max(s.mean + cfg.t * s.stddev, cfg.u_floor);
  s.unknown.resize(uncertainty.size());
  for (std::size_t i = 0; i < uncertainty.size(); ++i) {
    s.unknown[i] = uncertainty[i] >= s.threshold ? 1 : 0;
  }
  return s;
}

std::vector<VoxelIndex> detect_centers(const CenterHeatmap& heatmap, double min_score,
                                       std::size_t top_k) {
  const GridSpec& spec = heatmap.spec;
  std::vector<std::pair<double, VoxelIndex>> found;
  for (std::size_t lin = 0; lin < heatmap.values.size(); ++lin) {
    const double v = heatmap.values[lin];
    if (!(v >= min_score)) {
      continue;
    }
    const VoxelIndex c = voxel_index(spec, lin);
    bool strict = true;
    for (int dr = -1; dr <= 1 && strict; ++dr) {
      for (int da = -1; da <= 1 && strict; ++da) {
        for (int dz = -1; dz <= 1; ++dz) {
          if (dr == 0 && da == 0 && dz == 0) {
            continue;
          }
          const VoxelIndex nb{c.r + dr, c.a + da, c.z + dz};
          if (in_bounds(spec, nb) && heatmap.at(nb) >= v) {
            strict = false;
            break;
          }
        }
      }
    }
    if (strict) {
      found.emplace_back(v, c);
    }
  }
  std::sort(found.begin(), found.end(), [](const auto& x, const auto& y) {
    return x.first != y.first ? x.first > y.first : x.second < y.second;
  });
  if (found.size() > top_k) {
    found.resize(top_k);
  }
  std::vector<VoxelIndex> out;
  out.reserve(found.size());
  for (const auto& f : found) {
    out.push_back(f.second);
  }
  return out;
}

namespace {

double log_score(std::span<const double> phi, const InstancePrototype& p) {
  double d = 0.0;
  for (std::size_t i = 0; i < phi.size(); ++i) {
    const double t = phi[i] - p.mu[i];
    d += t * t;
  }
  return -d / (2.0 * p.sigma_sq);
}

}  // namespace

std::vector<std::int64_t> assign_known_instances(EmbeddingView embeddings,
                                                 std::span<const InstancePrototype> prototypes,
                                                 std::span<const std::uint8_t> mask) {
  const std::size_t n = embeddings.size();
  if (mask.size() != n) {
    throw ShapeMismatchError("assign_known_instances: mask size differs from embedding count");
  }
  for (const auto& p : prototypes) {
    if (!(p.sigma_sq > 0.0) || p.mu.size() != embeddings.dim) {
      throw DomainError("assign_known_instances: invalid prototype");
    }
  }
  std::vector<std::int64_t> out(n, kUnassigned);
  for (std::size_t v = 0; v < n; ++v) {
    if (!mask[v]) {
      continue;
    }
    if (prototypes.empty()) {
      out[v] = kFallbackInstance;
      continue;
    }
    const auto phi = embeddings.row(v);
    std::size_t best = 0;
    double best_score = log_score(phi, prototypes[0]);
    for (std::size_t c = 1; c < prototypes.size(); ++c) {
      const double s = log_score(phi, prototypes[c]);
      if (s > best_score) {
        best_score = s;
        best = c;
      }
    }
    out[v] = static_cast<std::int64_t>(best);
  }
  return out;
}

std::vector<std::uint32_t> vote_instance_semantics(std::span<const std::int64_t> instance_of_row,
                                                   std::size_t instance_count,
                                                   std::span<const std::uint32_t> row_class,
                                                   const Vocabulary& vocab) {
  if (instance_of_row.size() != row_class.size()) {
    throw ShapeMismatchError("vote_instance_semantics: row counts differ");
  }
  const std::size_t k = vocab.known_count();
  std::vector<std::vector<std::size_t>> thing_votes(instance_count, std::vector<std::size_t>(k));
  std::vector<std::vector<std::size_t>> all_votes(instance_count, std::vector<std::size_t>(k));
  for (std::size_t v = 0; v < row_class.size(); ++v) {
    const std::int64_t inst = instance_of_row[v];
    if (inst < 0 || static_cast<std::size_t>(inst) >= instance_count || row_class[v] >= k) {
      continue;
    }
    ++all_votes[static_cast<std::size_t>(inst)][row_class[v]];
    if (vocab.is_thing(row_class[v])) {
      ++thing_votes[static_cast<std::size_t>(inst)][row_class[v]];
    }
  }
  std::vector<std::uint32_t> out(instance_count, 0);
  for (std::size_t i = 0; i < instance_count; ++i) {
    const bool any_thing = std::any_of(thing_votes[i].begin(), thing_votes[i].end(),
                                       [](std::size_t c) { return c > 0; });
    const auto& votes = any_thing ? thing_votes[i] : all_votes[i];
    // max_element returns the first maximum, i.e. the lowest class index.
    out[i] = static_cast<std::uint32_t>(std::max_element(votes.begin(), votes.end()) -
                                        votes.begin());
  }
  return out;
}

std::vector<std::int64_t> dbscan(EmbeddingView points, double eps, std::size_t min_pts) {
  if (!(eps > 0.0) || min_pts < 1) {
    throw DomainError("dbscan: need eps > 0 and min_pts >= 1");
  }
  const std::size_t n = points.size();
  const double eps2 = eps * eps;
  auto dist2 = [&](std::size_t i, std::size_t j) {
    const auto a = points.row(i);
    const auto b = points.row(j);
    double d = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double t = a[k] - b[k];
      d += t * t;
    }
    return d;
  };

  std::vector<std::vector<std::size_t>> neighbors(n);
  for (std::size_t i = 0; i < n; ++i) {
    neighbors[i].push_back(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      if (dist2(i, j) <= eps2) {
        neighbors[i].push_back(j);
        neighbors[j].push_back(i);
      }
    }
  }
  std::vector<std::uint8_t> core(n);
  for (std::size_t i = 0; i < n; ++i) {
    core[i] = neighbors[i].size() >= min_pts ? 1 : 0;
  }

  std::vector<std::int64_t> label(n, kNoise);
  std::int64_t next = 0;
  std::vector<std::size_t> stack;
  for (std::size_t seed = 0; seed < n; ++seed) {
    if (!core[seed] || label[seed] != kNoise) {
      continue;
    }
    label[seed] = next;
    stack.assign(1, seed);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      for (std::size_t q : neighbors[p]) {
        if (core[q] && label[q] == kNoise) {
          label[q] = next;
          stack.push_back(q);
        }
      }
    }
    ++next;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (core[i]) {
      continue;
    }
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_core = n;
    for (std::size_t q : neighbors[i]) {
      if (!core[q]) {
        continue;
      }
      const double d = dist2(i, q);
      if (d < best || (d == best && q < best_core)) {
        best = d;
        best_core = q;
      }
    }
    if (best_core < n) {
      label[i] = label[best_core];
    }
  }
  return label;
}

const char* kind_name(VoxelKind kind) {
  switch (kind) {
    case VoxelKind::kStuff:
      return "STUFF";
    case VoxelKind::kThing:
      return "THING";
    case VoxelKind::kUnknown:
      return "UNKNOWN";
    case VoxelKind::kUnknownNoise:
      return "UNKNOWN_NOISE";
  }
  return "?";
}

VoxelKind parse_kind(std::string_view name) {
  for (VoxelKind k : {VoxelKind::kStuff, VoxelKind::kThing, VoxelKind::kUnknown,
                      VoxelKind::kUnknownNoise}) {
    if (name == kind_name(k)) {
      return k;
    }
  }
  throw FormatError("unknown voxel kind '" + std::string(name) + "'");
}

PanopticPrediction fuse(const VoxelGrid& grid, const FusionInputs& in, const Vocabulary& vocab,
                        const InferenceConfig& cfg) {
  const std::size_t n = grid.size();
  const std::size_t k = in.num_classes;
  if (k != vocab.known_count()) {
    throw ShapeMismatchError("fuse: head class count " + std::to_string(k) +
                             " differs from the vocabulary (" +
                             std::to_string(vocab.known_count()) + ")");
  }
  if (in.class_scores.size() != n * k || in.uncertainty.size() != n ||
      in.embeddings.size() != n || in.variance.size() != n || in.center.size() != n) {
    throw ShapeMismatchError("fuse: per-voxel inputs do not match the grid");
  }

  // Step 1: uncertainty split. Never revisited below.
  const UnknownSplit split = split_unknown(in.uncertainty, cfg.threshold);

  PanopticPrediction pred;
  pred.spec = grid.spec;
  pred.voxels = grid.voxels;
  pred.threshold = split.threshold;
  pred.records.resize(n);

  std::vector<std::uint32_t> cls(n);
  for (std::size_t v = 0; v < n; ++v) {
    const auto row = in.class_scores.subspan(v * k, k);
    cls[v] = static_cast<std::uint32_t>(std::max_element(row.begin(), row.end()) - row.begin());
    pred.records[v].uncertainty = in.uncertainty[v];
  }

  // Step 2: known voxels.
  std::vector<std::uint8_t> thing_mask(n, 0);
  std::vector<double> masked_center(n, 0.0);
  for (std::size_t v = 0; v < n; ++v) {
    if (split.unknown[v]) {
      continue;
    }
    if (vocab.is_thing(cls[v])) {
      thing_mask[v] = 1;
      masked_center[v] = in.center[v];
    } else {
      pred.records[v].kind = VoxelKind::kStuff;
      pred.records[v].class_id = cls[v];
    }
  }
  const auto centers =
      detect_centers(scatter_heatmap(grid, masked_center, cfg.heatmap_sigma), cfg.center_min_score,
                     cfg.center_top_k);
  auto protos = extract_prototypes(grid, in.embeddings, in.variance, centers);
  if (cfg.center_merge_dist_sq > 0.0) {
    std::vector<InstancePrototype> kept;
    for (auto& p : protos) {
      const bool duplicate = std::any_of(kept.begin(), kept.end(), [&](const auto& q) {
        double d = 0.0;
        for (std::size_t i = 0; i < p.mu.size(); ++i) {
          d += (p.mu[i] - q.mu[i]) * (p.mu[i] - q.mu[i]);
        }
        return d < cfg.center_merge_dist_sq;
      });
      if (!duplicate) {
        kept.push_back(std::move(p));
      }
    }
    protos = std::move(kept);
  }
  std::vector<std::int64_t> inst = assign_known_instances(in.embeddings, protos, thing_mask);

  std::uint64_t next_id = 1;
  if (!protos.empty()) {
    const auto inst_class = vote_instance_semantics(inst, protos.size(), cls, vocab);
    // Ids follow prototype order; prototypes that won no voxel get none.
    std::vector<std::uint64_t> ids(protos.size(), 0);
    for (std::size_t v = 0; v < n; ++v) {
      if (inst[v] >= 0 && ids[static_cast<std::size_t>(inst[v])] == 0) {
        ids[static_cast<std::size_t>(inst[v])] = 1;
      }
    }
    for (auto& id : ids) {
      id = id != 0 ? next_id++ : 0;
    }
    for (std::size_t v = 0; v < n; ++v) {
      if (inst[v] >= 0) {
        const auto c = static_cast<std::size_t>(inst[v]);
        pred.records[v].kind = VoxelKind::kThing;
        pred.records[v].class_id = inst_class[c];
        pred.records[v].instance_id = ids[c];
      }
    }
  } else {
    std::map<std::uint32_t, std::uint64_t> per_class;
    for (std::size_t v = 0; v < n; ++v) {
      if (inst[v] != kFallbackInstance) {
        continue;
      }
      if (cfg.fallback == FallbackMode::kUnsegmented) {
        pred.records[v].kind = VoxelKind::kStuff;
        pred.records[v].class_id = cls[v];
        continue;
      }
      per_class.emplace(cls[v], 0);
    }
    for (auto& [c, id] : per_class) {
      id = next_id++;
    }
    for (std::size_t v = 0; v < n; ++v) {
      if (inst[v] == kFallbackInstance && cfg.fallback == FallbackMode::kPerClass) {
        pred.records[v].kind = VoxelKind::kThing;
        pred.records[v].class_id = cls[v];
        pred.records[v].instance_id = per_class.at(cls[v]);
      }
    }
  }

  // Step 3: cluster unknown voxels by embedding.
  std::vector<std::size_t> unknown_rows;
  for (std::size_t v = 0; v < n; ++v) {
    if (split.unknown[v]) {
      unknown_rows.push_back(v);
    }
  }
  if (!unknown_rows.empty()) {
    const std::size_t f = in.embeddings.dim;
    const std::size_t dim = f + (cfg.dbscan_use_xyz ? 3 : 0);
    std::vector<double> pts(unknown_rows.size() * dim);
    for (std::size_t i = 0; i < unknown_rows.size(); ++i) {
      const auto phi = in.embeddings.row(unknown_rows[i]);
      std::copy(phi.begin(), phi.end(), pts.begin() + static_cast<std::ptrdiff_t>(i * dim));
      if (cfg.dbscan_use_xyz) {
        const auto xyz = voxel_center_xyz(grid.spec, grid.index_of_row(unknown_rows[i]));
        std::copy(xyz.begin(), xyz.end(), pts.begin() + static_cast<std::ptrdiff_t>(i * dim + f));
      }
    }
    const auto labels = dbscan({pts, dim}, cfg.dbscan_eps, cfg.dbscan_min_pts);
    const std::uint64_t base = next_id;
    for (std::size_t i = 0; i < unknown_rows.size(); ++i) {
      VoxelPrediction& r = pred.records[unknown_rows[i]];
      r.class_id = -1;
      if (labels[i] == kNoise) {
        r.kind = VoxelKind::kUnknownNoise;
        r.instance_id = 0;
      } else {
        r.kind = VoxelKind::kUnknown;
        r.instance_id = base + static_cast<std::uint64_t>(labels[i]);
      }
    }
  }
  return pred;
}

std::vector<double> head_uncertainty(const HeadParams& params, const HeadOutputs& out) {
  const std::size_t n = out.size();
  const std::size_t k = params.num_classes();
  std::vector<double> u(n);
  for (std::size_t v = 0; v < n; ++v) {
    const Eigen::VectorXd row = out.logits.row(static_cast<Eigen::Index>(v)).transpose();
    if (params.mode() == SemanticMode::kDirichlet) {
      const auto eo = alpha_from_logits({row.data(), k}, k);
      u[v] = eo.uncertainty[0];
    } else {
      u[v] = softmax_entropy_uncertainty({row.data(), k});
    }
  }
  return u;
}

PanopticPrediction infer_scene(const HeadParams& params, const VoxelGrid& grid,
                               const Vocabulary& vocab, const InferenceConfig& cfg) {
  if (grid.size() == 0) {
    throw EmptySceneError("infer_scene: grid has no non-empty voxels");
  }
  const HeadOutputs out = forward(params, grid);
  const std::vector<double> u = head_uncertainty(params, out);
  FusionInputs in;
  in.class_scores = {out.logits.data(), static_cast<std::size_t>(out.logits.size())};
  in.num_classes = params.num_classes();
  in.uncertainty = u;
  in.embeddings = out.embedding_view();
  in.variance = {out.variance.data(), out.size()};
  in.center = {out.center.data(), out.size()};
  return fuse(grid, in, vocab, cfg);
}

// ---------------------------------------------------------------------------
// Prediction files

namespace {

constexpr char kPredMagic[8] = {'E', 'V', 'P', 'N', 'P', 'R', 'E', 'D'};
constexpr std::string_view kTextTag = "evipan-prediction";
constexpr std::size_t kBinaryHeaderBytes = 8 + 8 * 10;
constexpr std::size_t kBinaryRecordBytes = 7 * 8;

}  // namespace

void write_prediction_text(const PanopticPrediction& pred, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw IoError("cannot open file for writing: " + path.string());
  }
  char buf[512];
  const GridSpec& s = pred.spec;
  std::snprintf(buf, sizeof(buf), "%s %llu\ngrid %d %d %d %.17g %.17g %.17g %.17g\n",
                std::string(kTextTag).c_str(), static_cast<unsigned long long>(kPredictionVersion),
                s.h, s.w, s.z, s.r_min, s.r_max, s.z_min, s.z_max);
  out << buf;
  std::snprintf(buf, sizeof(buf), "threshold %.17g\ncount %zu\n", pred.threshold, pred.size());
  out << buf;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const VoxelIndex v = voxel_index(s, pred.voxels[i]);
    const VoxelPrediction& r = pred.records[i];
    std::snprintf(buf, sizeof(buf), "%d %d %d %s %lld %llu %.17g\n", v.r, v.a, v.z,
                  kind_name(r.kind), static_cast<long long>(r.class_id),
                  static_cast<unsigned long long>(r.instance_id), r.uncertainty);
    out << buf;
  }
  if (!out) {
    throw IoError("write failed: " + path.string());
  }
}

void write_prediction_binary(const PanopticPrediction& pred, const std::filesystem::path& path) {
  std::vector<unsigned char> bytes(kPredMagic, kPredMagic + 8);
  const GridSpec& s = pred.spec;
  detail::put_le<std::uint64_t>(bytes, kPredictionVersion);
  detail::put_le<std::uint64_t>(bytes, static_cast<std::uint64_t>(s.h));
  detail::put_le<std::uint64_t>(bytes, static_cast<std::uint64_t>(s.w));
  detail::put_le<std::uint64_t>(bytes, static_cast<std::uint64_t>(s.z));
  detail::put_f64(bytes, s.r_min);
  detail::put_f64(bytes, s.r_max);
  detail::put_f64(bytes, s.z_min);
  detail::put_f64(bytes, s.z_max);
  detail::put_f64(bytes, pred.threshold);
  detail::put_le<std::uint64_t>(bytes, pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const VoxelIndex v = voxel_index(s, pred.voxels[i]);
    const VoxelPrediction& r = pred.records[i];
    detail::put_i64(bytes, v.r);
    detail::put_i64(bytes, v.a);
    detail::put_i64(bytes, v.z);
    detail::put_i64(bytes, static_cast<std::int64_t>(r.kind));
    detail::put_i64(bytes, r.class_id);
    detail::put_i64(bytes, static_cast<std::int64_t>(r.instance_id));
    detail::put_f64(bytes, r.uncertainty);
  }
  detail::write_file_bytes(path, bytes);
}

namespace {

void append_record(PanopticPrediction& pred, const VoxelIndex& v, const VoxelPrediction& r) {
  if (!in_bounds(pred.spec, v)) {
    throw FormatError("prediction voxel outside the grid");
  }
  const auto lin = static_cast<std::uint32_t>(linear_index(pred.spec, v));
  if (!pred.voxels.empty() && lin <= pred.voxels.back()) {
    throw FormatError("prediction voxels must be strictly ascending");
  }
  pred.voxels.push_back(lin);
  pred.records.push_back(r);
}

PanopticPrediction parse_binary(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < kBinaryHeaderBytes) {
    throw FormatError("truncated binary prediction header");
  }
  const unsigned char* p = bytes.data() + 8;
  if (detail::get_le<std::uint64_t>(p) != kPredictionVersion) {
    throw FormatError("unsupported prediction version");
  }
  PanopticPrediction pred;
  pred.spec.h = static_cast<int>(detail::get_le<std::uint64_t>(p + 8));
  pred.spec.w = static_cast<int>(detail::get_le<std::uint64_t>(p + 16));
  pred.spec.z = static_cast<int>(detail::get_le<std::uint64_t>(p + 24));
  pred.spec.r_min = detail::get_f64(p + 32);
  pred.spec.r_max = detail::get_f64(p + 40);
  pred.spec.z_min = detail::get_f64(p + 48);
  pred.spec.z_max = detail::get_f64(p + 56);
  pred.threshold = detail::get_f64(p + 64);
  const std::uint64_t count = detail::get_le<std::uint64_t>(p + 72);
  try {
    pred.spec.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("prediction grid: ") + e.what());
  }
  if (bytes.size() != kBinaryHeaderBytes + count * kBinaryRecordBytes) {
    throw FormatError("binary prediction size does not match its record count");
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    const unsigned char* r = bytes.data() + kBinaryHeaderBytes + i * kBinaryRecordBytes;
    const VoxelIndex v{static_cast<int>(detail::get_i64(r)), static_cast<int>(detail::get_i64(r + 8)),
                       static_cast<int>(detail::get_i64(r + 16))};
    const std::int64_t kind = detail::get_i64(r + 24);
    if (kind < 0 || kind > 3) {
      throw FormatError("prediction record has an invalid kind");
    }
    VoxelPrediction rec{static_cast<VoxelKind>(kind), detail::get_i64(r + 32),
                        static_cast<std::uint64_t>(detail::get_i64(r + 40)), detail::get_f64(r + 48)};
    append_record(pred, v, rec);
  }
  return pred;
}

PanopticPrediction parse_text(const std::string& text) {
  std::istringstream in(text);
  auto fail = [](const std::string& what) -> PanopticPrediction {
    throw FormatError("text prediction: " + what);
  };
  std::string tag, key;
  std::uint64_t version = 0;
  if (!(in >> tag >> version) || tag != kTextTag) {
    return fail("missing header");
  }
  if (version != kPredictionVersion) {
    return fail("unsupported version");
  }
  PanopticPrediction pred;
  GridSpec& s = pred.spec;
  if (!(in >> key >> s.h >> s.w >> s.z >> s.r_min >> s.r_max >> s.z_min >> s.z_max) ||
      key != "grid") {
    return fail("bad grid line");
  }
  try {
    s.validate();
  } catch (const Error& e) {
    return fail(e.what());
  }
  std::size_t count = 0;
  if (!(in >> key >> pred.threshold) || key != "threshold") {
    return fail("bad threshold line");
  }
  if (!(in >> key >> count) || key != "count") {
    return fail("bad count line");
  }
  for (std::size_t i = 0; i < count; ++i) {
    VoxelIndex v;
    std::string kind;
    VoxelPrediction r;
    if (!(in >> v.r >> v.a >> v.z >> kind >> r.class_id >> r.instance_id >> r.uncertainty)) {
      return fail("truncated record " + std::to_string(i));
    }
    r.kind = parse_kind(kind);
    append_record(pred, v, r);
  }
  if (in >> key) {
    return fail("trailing data after " + std::to_string(count) + " records");
  }
  return pred;
}

}  // namespace

PanopticPrediction read_prediction(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  if (bytes.size() >= 8 && std::equal(kPredMagic, kPredMagic + 8, bytes.begin())) {
    return parse_binary(bytes);
  }
  return parse_text(std::string(bytes.begin(), bytes.end()));
}

}  // namespace evipan
