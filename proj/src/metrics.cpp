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

#include "evipan/metrics.hpp"

#include <cstdio>
#include <map>
#include <set>
#include <utility>

#include "evipan/errors.hpp"

namespace evipan {

ClassMatching match_segments(std::span<const ElementLabel> pred, std::span<const ElementLabel> gt,
                             std::int64_t class_id) {
  if (pred.size() != gt.size()) {
    throw ShapeMismatchError("match_segments: prediction and ground truth lengths differ");
  }
  std::map<std::uint64_t, std::size_t> pred_area, gt_area;
  std::map<std::pair<std::uint64_t, std::uint64_t>, std::size_t> inter;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i].class_id == kVoidClass) {
      continue;
    }
    const bool in_pred = pred[i].class_id == class_id;
    const bool in_gt = gt[i].class_id == class_id;
    if (in_pred) {
      ++pred_area[pred[i].instance];
    }
    if (in_gt) {
      ++gt_area[gt[i].instance];
    }
    if (in_pred && in_gt) {
      ++inter[{pred[i].instance, gt[i].instance}];
    }
  }
  ClassMatching m;
  std::set<std::uint64_t> matched_pred, matched_gt;
  for (const auto& [key, n] : inter) {
    const std::size_t uni = pred_area[key.first] + gt_area[key.second] - n;
    const double iou = static_cast<double>(n) / static_cast<double>(uni);
    if (iou > 0.5) {
      m.tp.push_back(SegmentMatch{key.first, key.second, n, uni, iou});
      matched_pred.insert(key.first);
      matched_gt.insert(key.second);
    }
  }
  for (const auto& [id, area] : pred_area) {
    if (!matched_pred.count(id)) {
      m.fp.push_back(id);
    }
  }
  for (const auto& [id, area] : gt_area) {
    if (!matched_gt.count(id)) {
      m.fn.push_back(id);
    }
  }
  return m;
}

QualityCounts& QualityCounts::operator+=(const QualityCounts& o) {
  iou_sum += o.iou_sum;
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  return *this;
}

QualityCounts QualityCounts::from(const ClassMatching& m) {
  QualityCounts c;
  for (const auto& t : m.tp) {
    c.iou_sum += t.iou;
  }
  c.tp = m.tp.size();
  c.fp = m.fp.size();
  c.fn = m.fn.size();
  return c;
}

PanopticQuality panoptic_quality(const QualityCounts& c) {
  PanopticQuality q;
  if (!c.present()) {
    return q;
  }
  const double denom = static_cast<double>(c.tp) + 0.5 * static_cast<double>(c.fp) +
                       0.5 * static_cast<double>(c.fn);
  q.sq = c.tp > 0 ? c.iou_sum / static_cast<double>(c.tp) : 0.0;
  q.rq = static_cast<double>(c.tp) / denom;
  q.pq = c.iou_sum / denom;
  return q;
}

PanopticQuality panoptic_quality(const ClassMatching& m) {
  return panoptic_quality(QualityCounts::from(m));
}

UnknownQuality unknown_quality(const QualityCounts& c) {
  UnknownQuality q;
  q.uq = panoptic_quality(c).pq;
  q.sq = c.tp > 0 ? c.iou_sum / static_cast<double>(c.tp) : 0.0;
  q.recall = c.tp + c.fn > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
  return q;
}

UnknownQuality unknown_quality(const ClassMatching& m) {
  return unknown_quality(QualityCounts::from(m));
}

MetricAccumulator::MetricAccumulator(const Vocabulary& vocab)
    : vocab_(vocab), known_(vocab.known_count()) {}

void MetricAccumulator::add(std::span<const ElementLabel> pred, std::span<const ElementLabel> gt) {
  if (pred.size() != gt.size()) {
    throw ShapeMismatchError("evaluation: prediction and ground truth lengths differ");
  }
  if (gt.empty()) {
    throw EmptySceneError("evaluation: scene has no elements");
  }
  for (std::size_t c = 0; c < known_.size(); ++c) {
    known_[c] += QualityCounts::from(match_segments(pred, gt, static_cast<std::int64_t>(c)));
  }
  unknown_ += QualityCounts::from(match_segments(pred, gt, kUnknownClass));
  ++scenes_;
}

MetricReport MetricAccumulator::report() const {
  MetricReport r;
  r.scenes = scenes_;
  double pq = 0, sq = 0, rq = 0, pq_th = 0, pq_st = 0;
  std::size_t n = 0, n_th = 0, n_st = 0;
  for (std::size_t c = 0; c < known_.size(); ++c) {
    ClassMetrics m;
    m.class_index = static_cast<std::uint32_t>(c);
    m.name = vocab_.class_name(m.class_index);
    m.thing = vocab_.is_thing(m.class_index);
    m.counts = known_[c];
    m.quality = panoptic_quality(m.counts);
    if (m.counts.present()) {
      pq += m.quality.pq;
      sq += m.quality.sq;
      rq += m.quality.rq;
      ++n;
      if (m.thing) {
        pq_th += m.quality.pq;
        ++n_th;
      } else {
        pq_st += m.quality.pq;
        ++n_st;
      }
    }
    r.per_class.push_back(std::move(m));
  }
  auto mean = [](double s, std::size_t k) { return k > 0 ? s / static_cast<double>(k) : 0.0; };
  r.pq = mean(pq, n);
  r.sq = mean(sq, n);
  r.rq = mean(rq, n);
  r.pq_th = mean(pq_th, n_th);
  r.pq_st = mean(pq_st, n_st);
  r.unknown_counts = unknown_;
  r.unknown = unknown_quality(unknown_);
  return r;
}

nlohmann::json MetricReport::to_json() const {
  auto counts = [](const QualityCounts& c) {
    return nlohmann::json{{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"iou_sum", c.iou_sum}};
  };
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& m : per_class) {
    classes.push_back({{"class", m.class_index},
                       {"name", m.name},
                       {"kind", m.thing ? "thing" : "stuff"},
                       {"present", m.counts.present()},
                       {"PQ", m.quality.pq},
                       {"SQ", m.quality.sq},
                       {"RQ", m.quality.rq},
                       {"counts", counts(m.counts)}});
  }
  return {{"scenes", scenes},
          {"known",
           {{"PQ", pq}, {"PQ_Th", pq_th}, {"PQ_St", pq_st}, {"SQ", sq}, {"RQ", rq}}},
          {"unknown",
           {{"UQ", unknown.uq},
            {"Recall", unknown.recall},
            {"SQ", unknown.sq},
            {"counts", counts(unknown_counts)}}},
          {"per_class", classes}};
}

std::string MetricReport::to_table() const {
  std::string out = "class\tname\tkind\tPQ\tSQ\tRQ\tTP\tFP\tFN\n";
  char buf[256];
  for (const auto& m : per_class) {
    std::snprintf(buf, sizeof(buf), "%u\t%s\t%s\t%.6f\t%.6f\t%.6f\t%zu\t%zu\t%zu\n", m.class_index,
                  m.name.c_str(), m.thing ? "thing" : "stuff", m.quality.pq, m.quality.sq,
                  m.quality.rq, m.counts.tp, m.counts.fp, m.counts.fn);
    out += buf;
  }
  const PanopticQuality uq = panoptic_quality(unknown_counts);
  std::snprintf(buf, sizeof(buf), "-\tunknown\tunknown\t%.6f\t%.6f\t%.6f\t%zu\t%zu\t%zu\n", uq.pq,
                uq.sq, uq.rq, unknown_counts.tp, unknown_counts.fp, unknown_counts.fn);
  out += buf;
  return out;
}

namespace {

ElementLabel gt_label(std::uint32_t semantic, std::uint32_t instance, const Vocabulary& vocab) {
  if (semantic < vocab.known_count()) {
    if (vocab.is_thing(semantic)) {
      return instance > 0 ? ElementLabel{semantic, instance} : ElementLabel{};
    }
    return ElementLabel{semantic, 0};
  }
  if (semantic == kUnknownLabel && instance > 0) {
    return ElementLabel{kUnknownClass, instance};
  }
  return ElementLabel{};
}

ElementLabel pred_label(const VoxelPrediction& r) {
  switch (r.kind) {
    case VoxelKind::kStuff:
      return {r.class_id, 0};
    case VoxelKind::kThing:
      return {r.class_id, r.instance_id};
    case VoxelKind::kUnknown:
      return {kUnknownClass, r.instance_id};
    case VoxelKind::kUnknownNoise:
      break;
  }
  return {};
}

void check_aligned(const PanopticPrediction& pred, const VoxelGrid& grid) {
  if (!(pred.spec == grid.spec) || pred.voxels != grid.voxels) {
    throw ShapeMismatchError("prediction and ground-truth grids cover different voxels");
  }
}

}  // namespace

std::vector<ElementLabel> prediction_elements(const PanopticPrediction& pred) {
  std::vector<ElementLabel> out;
  out.reserve(pred.size());
  for (const auto& r : pred.records) {
    out.push_back(pred_label(r));
  }
  return out;
}

std::vector<ElementLabel> ground_truth_elements(const VoxelGrid& grid, const Vocabulary& vocab) {
  std::vector<ElementLabel> out;
  out.reserve(grid.size());
  for (std::size_t row = 0; row < grid.size(); ++row) {
    out.push_back(gt_label(grid.semantic_target[row], grid.instance_target[row], vocab));
  }
  return out;
}

PointElements point_elements(const PanopticPrediction& pred, const VoxelGrid& grid,
                             std::span<const PointLabel> labels, const Vocabulary& vocab) {
  check_aligned(pred, grid);
  const auto rows = grid.point_to_row(labels.size());
  PointElements out;
  for (std::size_t p = 0; p < labels.size(); ++p) {
    if (rows[p] < 0) {
      continue;
    }
    out.pred.push_back(pred_label(pred.records[static_cast<std::size_t>(rows[p])]));
    out.gt.push_back(gt_label(labels[p].semantic_id, labels[p].instance_id, vocab));
  }
  return out;
}

MetricReport evaluate(const PanopticPrediction& pred, const VoxelGrid& grid,
                      const Vocabulary& vocab) {
  check_aligned(pred, grid);
  MetricAccumulator acc(vocab);
  acc.add(prediction_elements(pred), ground_truth_elements(grid, vocab));
  return acc.report();
}

}  // namespace evipan
