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

// Open-set panoptic metrics: PQ / SQ / RQ per known class and the unknown
// class-agnostic UQ / Recall / SQ.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "evipan/inference.hpp"
#include "evipan/pointcloud_io.hpp"
#include "evipan/polar_grid.hpp"

namespace evipan {

inline constexpr std::int64_t kVoidClass = -1;     // ignored ground truth / unsegmented prediction
inline constexpr std::int64_t kUnknownClass = -2;  // the single class-agnostic unknown class

/// One evaluated element (voxel or point). Stuff segments use instance 0.
struct ElementLabel {
  std::int64_t class_id = kVoidClass;
  std::uint64_t instance = 0;

  friend bool operator==(const ElementLabel&, const ElementLabel&) = default;
};

struct SegmentMatch {
  std::uint64_t pred_id = 0;
  std::uint64_t gt_id = 0;
  std::size_t intersection = 0;
  std::size_t union_count = 0;
  double iou = 0.0;
};

struct ClassMatching {
  std::vector<SegmentMatch> tp;
  std::vector<std::uint64_t> fp;  // unmatched predicted segment ids
  std::vector<std::uint64_t> fn;  // unmatched ground-truth segment ids
};

/// Segments of `class_id` are the distinct instance ids carrying that class.
/// Elements whose ground truth is void are dropped from every area. A pair
/// is a TP iff IoU > 0.5, which makes the matching unique.
ClassMatching match_segments(std::span<const ElementLabel> pred, std::span<const ElementLabel> gt,
                             std::int64_t class_id);

struct QualityCounts {
  double iou_sum = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0;

  bool present() const { return tp + fp + fn > 0; }
  QualityCounts& operator+=(const QualityCounts& o);
  static QualityCounts from(const ClassMatching& m);
};

struct PanopticQuality {
  double pq = 0.0, sq = 0.0, rq = 0.0;
};

/// PQ = sum IoU / (TP + FP/2 + FN/2); SQ = mean TP IoU; RQ = TP / (TP + FP/2 + FN/2).
/// All zero when no TP/FP/FN exist.
PanopticQuality panoptic_quality(const QualityCounts& c);
PanopticQuality panoptic_quality(const ClassMatching& m);

struct UnknownQuality {
  double uq = 0.0, recall = 0.0, sq = 0.0;
};

UnknownQuality unknown_quality(const QualityCounts& c);
UnknownQuality unknown_quality(const ClassMatching& m);

struct ClassMetrics {
  std::uint32_t class_index = 0;
  std::string name;
  bool thing = false;
  QualityCounts counts;
  PanopticQuality quality;
};

struct MetricReport {
  std::vector<ClassMetrics> per_class;
  double pq = 0.0, sq = 0.0, rq = 0.0;
  double pq_th = 0.0, pq_st = 0.0;
  QualityCounts unknown_counts;
  UnknownQuality unknown;
  std::size_t scenes = 0;

  nlohmann::json to_json() const;
  /// Tab-separated per-class rows plus an "unknown" row.
  std::string to_table() const;
};

/// Known classes are averaged only when they have at least one TP/FP/FN.
class MetricAccumulator {
 public:
  explicit MetricAccumulator(const Vocabulary& vocab);

  void add(std::span<const ElementLabel> pred, std::span<const ElementLabel> gt);
  MetricReport report() const;

 private:
  Vocabulary vocab_;
  std::vector<QualityCounts> known_;
  QualityCounts unknown_;
  std::size_t scenes_ = 0;
};

/// Voxel-level labels. `grid` must carry remapped majority-vote targets.
std::vector<ElementLabel> prediction_elements(const PanopticPrediction& pred);
std::vector<ElementLabel> ground_truth_elements(const VoxelGrid& grid, const Vocabulary& vocab);

/// Point-level labels: each in-grid point takes its voxel's prediction and its
/// own remapped label. Out-of-grid points are skipped.
struct PointElements {
  std::vector<ElementLabel> pred, gt;
};
PointElements point_elements(const PanopticPrediction& pred, const VoxelGrid& grid,
                             std::span<const PointLabel> labels, const Vocabulary& vocab);

/// Single-scene voxel-level evaluation. Throws ShapeMismatchError when the
/// prediction and grid disagree and EmptySceneError for an empty grid.
MetricReport evaluate(const PanopticPrediction& pred, const VoxelGrid& grid,
                      const Vocabulary& vocab);

}  // namespace evipan
