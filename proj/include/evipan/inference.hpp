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

// Open-set fusion: uncertainty split, center detection + prototype
// association for known things, DBSCAN over unknown-voxel embeddings.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "evipan/evidential.hpp"
#include "evipan/instance_embedding.hpp"
#include "evipan/pointcloud_io.hpp"
#include "evipan/polar_grid.hpp"
#include "evipan/toy_head.hpp"

namespace evipan {

struct ThresholdConfig {
  double t = 3.0;
  double u_floor = 0.5;

  void validate() const;
};

struct UnknownSplit {
  double mean = 0.0;
  double stddev = 0.0;     // population
  double threshold = 0.0;  // max(mean + t * stddev, u_floor)
  std::vector<std::uint8_t> unknown;
};

/// Throws EmptySceneError for an empty input.
UnknownSplit split_unknown(std::span<const double> uncertainty, const ThresholdConfig& cfg);

/// Strict maxima of the 3x3x3 neighborhood (truncated at the grid boundary,
/// no angular wrap) with value >= min_score; highest first, ties by voxel
/// coordinate, at most top_k.
std::vector<VoxelIndex> detect_centers(const CenterHeatmap& heatmap, double min_score,
                                       std::size_t top_k);

inline constexpr std::int64_t kUnassigned = -1;
inline constexpr std::int64_t kFallbackInstance = -2;

/// For masked rows: index of the prototype with the highest association
/// score (lowest index on ties). Unmasked rows stay kUnassigned. With no
/// prototypes every masked row becomes kFallbackInstance.
///
/// Scores are compared in log space, -|phi - mu|^2 / (2 sigma^2), which has
/// the same argmax and does not underflow.
std::vector<std::int64_t> assign_known_instances(EmbeddingView embeddings,
                                                 std::span<const InstancePrototype> prototypes,
                                                 std::span<const std::uint8_t> mask);

/// Modal thing class per instance (ties to the lowest index). Members whose
/// class is not a thing are ignored unless no member is a thing.
std::vector<std::uint32_t> vote_instance_semantics(std::span<const std::int64_t> instance_of_row,
                                                   std::size_t instance_count,
                                                   std::span<const std::uint32_t> row_class,
                                                   const Vocabulary& vocab);

inline constexpr std::int64_t kNoise = -1;

/// Cluster labels 0, 1, ... numbered by lowest core index; kNoise otherwise.
/// A border point joins the cluster of its nearest core point (ties to the
/// lowest core index), so the partition does not depend on input order.
std::vector<std::int64_t> dbscan(EmbeddingView points, double eps, std::size_t min_pts);

enum class VoxelKind : std::uint8_t { kStuff = 0, kThing = 1, kUnknown = 2, kUnknownNoise = 3 };

const char* kind_name(VoxelKind kind);
VoxelKind parse_kind(std::string_view name);

struct VoxelPrediction {
  VoxelKind kind = VoxelKind::kStuff;
  std::int64_t class_id = -1;    // known class index, -1 for unknown kinds
  std::uint64_t instance_id = 0;  // 0 for STUFF and UNKNOWN_NOISE
  double uncertainty = 0.0;

  friend bool operator==(const VoxelPrediction&, const VoxelPrediction&) = default;
};

struct PanopticPrediction {
  GridSpec spec;
  std::vector<std::uint32_t> voxels;  // linear ids, ascending (same rows as the grid)
  std::vector<VoxelPrediction> records;
  double threshold = 0.0;

  std::size_t size() const { return voxels.size(); }
  friend bool operator==(const PanopticPrediction&, const PanopticPrediction&) = default;
};

enum class FallbackMode {
  kPerClass,     // thing voxels without centers form one instance per class
  kUnsegmented,  // ... or are emitted as STUFF of their class
};

struct InferenceConfig {
  ThresholdConfig threshold;
  double center_min_score = 0.1;
  std::size_t center_top_k = 100;
  /// A detected center is dropped when its prototype lies within this squared
  /// embedding distance of a stronger, already-kept prototype. 0 disables.
  double center_merge_dist_sq = 1.5;
  double dbscan_eps = 0.5;
  std::size_t dbscan_min_pts = 5;
  bool dbscan_use_xyz = false;
  FallbackMode fallback = FallbackMode::kPerClass;
  double heatmap_sigma = 2.0;

  void validate() const;
};

/// Raw per-voxel network outputs on one grid. class_scores is n x K,
/// row-major; only its argmax is used.
struct FusionInputs {
  std::span<const double> class_scores;
  std::size_t num_classes = 0;
  std::span<const double> uncertainty;
  EmbeddingView embeddings;
  std::span<const double> variance;
  std::span<const double> center;
};

/// Throws ShapeMismatchError when input sizes disagree with the grid.
PanopticPrediction fuse(const VoxelGrid& grid, const FusionInputs& in, const Vocabulary& vocab,
                        const InferenceConfig& cfg);

/// Head forward pass followed by fuse. Dirichlet heads use K / sum(alpha);
/// softmax heads use normalized entropy.
PanopticPrediction infer_scene(const HeadParams& params, const VoxelGrid& grid,
                               const Vocabulary& vocab, const InferenceConfig& cfg);

/// Per-voxel uncertainty from the head, in grid row order.
std::vector<double> head_uncertainty(const HeadParams& params, const HeadOutputs& out);

// ---------------------------------------------------------------------------
// Prediction files
//
// Text:
//   evipan-prediction 1
//   grid <h> <w> <z> <r_min> <r_max> <z_min> <z_max>
//   threshold <u>
//   count <n>
//   then n lines "r a z KIND class instance u", KIND one of STUFF, THING,
//   UNKNOWN, UNKNOWN_NOISE; reals printed with 17 significant digits.
//
// Binary (little-endian, every field 64 bits):
//   "EVPNPRED", u64 version (1), u64 h, w, z, f64 r_min, r_max, z_min, z_max,
//   f64 threshold, u64 n, then n records of
//   i64 r, i64 a, i64 z, i64 kind, i64 class, i64 instance, f64 u.

inline constexpr std::uint64_t kPredictionVersion = 1;

void write_prediction_text(const PanopticPrediction& pred, const std::filesystem::path& path);
void write_prediction_binary(const PanopticPrediction& pred, const std::filesystem::path& path);
/// Detects the format from the leading bytes. Throws FormatError.
PanopticPrediction read_prediction(const std::filesystem::path& path);

}  // namespace evipan
