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

#include <algorithm>
#include <cmath>
#include <iterator>
#include <map>
#include <numeric>
#include <set>

#include "evipan/errors.hpp"
#include "evipan/metrics.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace evipan;
using evipan::test::Gen;

namespace {

// Classes 0, 1 stuff; 2, 3 things.
Vocabulary vocab4() { return Vocabulary({40, 50}, {10, 20}, {}, {11}); }

constexpr ElementLabel kVoid{};
ElementLabel stuff(std::int64_t c) { return {c, 0}; }
ElementLabel thing(std::int64_t c, std::uint64_t i) { return {c, i}; }
ElementLabel unk(std::uint64_t i) { return {kUnknownClass, i}; }

}  // namespace

TEST_CASE("an IoU of 0.6 is a true positive") {
  // Ground truth car 1 = {0,1,2,3}; prediction car 9 = {0,1,2,4}.
  const std::vector<ElementLabel> gt{thing(2, 1), thing(2, 1), thing(2, 1), thing(2, 1), stuff(0)};
  const std::vector<ElementLabel> pred{thing(2, 9), thing(2, 9), thing(2, 9), stuff(0), thing(2, 9)};
  const ClassMatching m = match_segments(pred, gt, 2);
  REQUIRE(m.tp.size() == 1);
  CHECK(m.tp[0].pred_id == 9);
  CHECK(m.tp[0].gt_id == 1);
  CHECK(m.tp[0].intersection == 3);
  CHECK(m.tp[0].union_count == 5);
  CHECK(m.tp[0].iou == doctest::Approx(0.6));
  const PanopticQuality q = panoptic_quality(m);
  CHECK(q.pq == doctest::Approx(0.6));
  CHECK(q.sq == doctest::Approx(0.6));
  CHECK(q.rq == 1.0);
}

TEST_CASE("an IoU of exactly one half is a miss on both sides") {
  const std::vector<ElementLabel> gt{thing(2, 1), thing(2, 1), thing(2, 1), stuff(0)};
  const std::vector<ElementLabel> pred{thing(2, 5), thing(2, 5), stuff(0), thing(2, 5)};
  const ClassMatching m = match_segments(pred, gt, 2);
  CHECK(m.tp.empty());
  CHECK(m.fp == std::vector<std::uint64_t>{5});
  CHECK(m.fn == std::vector<std::uint64_t>{1});
  CHECK(panoptic_quality(m).pq == 0.0);
}

TEST_CASE("void ground truth is removed from every area") {
  // Without the void element the IoU would be 2/4; with it dropped it is 2/3.
  const std::vector<ElementLabel> gt{thing(3, 1), thing(3, 1), thing(3, 1), kVoid};
  const std::vector<ElementLabel> pred{thing(3, 2), thing(3, 2), stuff(1), thing(3, 2)};
  const ClassMatching m = match_segments(pred, gt, 3);
  REQUIRE(m.tp.size() == 1);
  CHECK(m.tp[0].iou == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("panoptic and unknown quality closed forms") {
  QualityCounts c;
  c.tp = 1;
  c.fp = 1;
  c.fn = 1;
  c.iou_sum = 0.8;
  const PanopticQuality q = panoptic_quality(c);
  CHECK(q.pq == doctest::Approx(0.4));
  CHECK(q.sq == doctest::Approx(0.8));
  CHECK(q.rq == doctest::Approx(0.5));
  const UnknownQuality u = unknown_quality(c);
  CHECK(u.uq == doctest::Approx(0.4));
  CHECK(u.recall == doctest::Approx(0.5));
  CHECK(u.sq == doctest::Approx(0.8));

  const QualityCounts none;
  CHECK(panoptic_quality(none).pq == 0.0);
  CHECK(unknown_quality(none).recall == 0.0);
}

TEST_CASE("report averages only the classes that appear") {
  const Vocabulary v = vocab4();
  // Thing 2 has one TP at IoU 2/3 and one FN; stuff 1 and thing 3 never
  // appear and must not drag the averages down.
  const std::vector<ElementLabel> gt{stuff(0), stuff(0), thing(2, 1), thing(2, 1), thing(2, 1), thing(2, 2),
                                     unk(1), unk(1)};
  const std::vector<ElementLabel> pred{stuff(0), stuff(0), thing(2, 4), thing(2, 4), stuff(0), stuff(0),
                                       unk(3), unk(3)};
  MetricAccumulator acc(v);
  acc.add(pred, gt);
  const std::vector<ElementLabel> gt2{stuff(0), kVoid};
  const std::vector<ElementLabel> pred2{stuff(0), unk(8)};
  acc.add(pred2, gt2);
  const MetricReport r = acc.report();
  CHECK(r.scenes == 2);
  // Stuff 0: scene 1 pred area 4 vs gt 2 gives IoU 0.5, a miss; scene 2 is
  // a perfect match. So TP 1, FP 1, FN 1 and PQ = 1 / 2.
  CHECK(r.per_class[0].counts.tp == 1);
  CHECK(r.per_class[0].quality.pq == doctest::Approx(0.5));
  CHECK(r.per_class[2].quality.pq == doctest::Approx((2.0 / 3.0) / 1.5));
  CHECK_FALSE(r.per_class[1].counts.present());
  CHECK_FALSE(r.per_class[3].counts.present());
  CHECK(r.pq == doctest::Approx((0.5 + (2.0 / 3.0) / 1.5) / 2));
  CHECK(r.pq_st == doctest::Approx(0.5));
  CHECK(r.pq_th == doctest::Approx((2.0 / 3.0) / 1.5));
  // The unknown prediction on void is dropped, so unknown is a single TP.
  CHECK(r.unknown_counts.tp == 1);
  CHECK(r.unknown_counts.fp == 0);
  CHECK(r.unknown.uq == 1.0);
  CHECK(r.unknown.recall == 1.0);

  const auto j = r.to_json();
  CHECK(j["known"]["PQ"] == r.pq);
  CHECK(j["unknown"]["UQ"] == 1.0);
  CHECK(j["per_class"].size() == 4);
  CHECK(r.to_table().find("unknown") != std::string::npos);
}

TEST_CASE("metrics agree with a brute-force segment oracle") {
  const Vocabulary v = vocab4();
  evipan::test::for_all(71, 50, [&](Gen& g, int) {
    const auto [pred, gt] = evipan::test::random_label_scene(g);
    MetricAccumulator acc(v);
    acc.add(pred, gt);
    const MetricReport r = acc.report();
    double sum = 0, th = 0, st = 0;
    int n = 0, n_th = 0, n_st = 0;
    for (std::int64_t c = 0; c < 4; ++c) {
      const auto o = evipan::test::oracle_segments(pred, gt, c);
      const auto& got = r.per_class[static_cast<std::size_t>(c)].counts;
      CHECK(got.tp == static_cast<std::size_t>(o.tp));
      CHECK(got.fp == static_cast<std::size_t>(o.fp));
      CHECK(got.fn == static_cast<std::size_t>(o.fn));
      if (o.tp + o.fp + o.fn > 0) {
        sum += evipan::test::oracle_pq(o);
        ++n;
        (c >= 2 ? th : st) += evipan::test::oracle_pq(o);
        ++(c >= 2 ? n_th : n_st);
      }
    }
    CHECK(r.pq == doctest::Approx(n ? sum / n : 0.0).epsilon(1e-12));
    CHECK(r.pq_th == doctest::Approx(n_th ? th / n_th : 0.0).epsilon(1e-12));
    CHECK(r.pq_st == doctest::Approx(n_st ? st / n_st : 0.0).epsilon(1e-12));
    const auto u = evipan::test::oracle_segments(pred, gt, kUnknownClass);
    CHECK(r.unknown.uq == doctest::Approx(evipan::test::oracle_pq(u)).epsilon(1e-12));
    CHECK(r.unknown.recall == doctest::Approx(u.tp + u.fn ? double(u.tp) / (u.tp + u.fn) : 0.0));
  });
}

TEST_CASE("PQ factors into SQ times RQ and ignores element order") {
  const Vocabulary v = vocab4();
  evipan::test::for_all(72, 50, [&](Gen& g, int) {
    auto [pred, gt] = evipan::test::random_label_scene(g);
    MetricAccumulator a(v);
    a.add(pred, gt);
    const MetricReport r = a.report();
    for (const auto& c : r.per_class) {
      CHECK(c.quality.pq == doctest::Approx(c.quality.sq * c.quality.rq).epsilon(1e-12));
      CHECK((c.quality.pq >= 0.0 && c.quality.pq <= 1.0));
    }
    std::vector<std::size_t> perm(pred.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), g.engine());
    std::vector<ElementLabel> p2, g2;
    for (std::size_t i : perm) {
      p2.push_back(pred[i]);
      g2.push_back(gt[i]);
    }
    MetricAccumulator b(v);
    b.add(p2, g2);
    CHECK(b.report().to_json() == r.to_json());
  });
}

TEST_CASE("one point per voxel makes point and voxel level agree") {
  const Vocabulary v = Vocabulary::synthetic_default();
  const GridSpec spec{4, 8, 2, 1.0, 5.0, -1.0, 1.0};
  const std::vector<std::uint32_t> raw{40, 50, 72, 10, 11};
  evipan::test::for_all(73, 20, [&](Gen& g, int) {
    Scene s;
    for (std::size_t lin = 0; lin < spec.voxel_count(); ++lin) {
      if (!g.coin(0.6)) {
        continue;
      }
      const auto c = voxel_center_xyz(spec, voxel_index(spec, lin));
      s.points.push_back({c[0], c[1], c[2], 0.5});
      const std::uint32_t sem = raw[g.index(raw.size())];
      s.labels.push_back({sem, sem == 10 || sem == 11 ? static_cast<std::uint32_t>(g.integer(1, 3)) : 0u});
    }
    if (s.points.empty()) {
      return;
    }
    s = remap_labels(s, v, LabelSplit::kEval);
    const VoxelGrid grid = majority_vote_targets(voxelize(s, spec), s.labels);
    REQUIRE(grid.size() == s.points.size());
    PanopticPrediction pred;
    pred.spec = spec;
    pred.voxels = grid.voxels;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const auto kind = static_cast<VoxelKind>(g.integer(0, 3));
      pred.records.push_back({kind, kind == VoxelKind::kStuff ? g.integer(0, 2) : kind == VoxelKind::kThing ? 3 : -1,
                              kind == VoxelKind::kThing || kind == VoxelKind::kUnknown
                                  ? static_cast<std::uint64_t>(g.integer(1, 3))
                                  : 0u,
                              0.0});
    }
    const PointElements pe = point_elements(pred, grid, s.labels, v);
    MetricAccumulator acc(v);
    acc.add(pe.pred, pe.gt);
    CHECK(acc.report().to_json() == evaluate(pred, grid, v).to_json());
  });
}

TEST_CASE("evaluation rejects empty and misaligned input") {
  const Vocabulary v = vocab4();
  MetricAccumulator acc(v);
  CHECK_THROWS_AS(acc.add({}, {}), EmptySceneError);
  const std::vector<ElementLabel> one{stuff(0)}, two{stuff(0), stuff(1)};
  CHECK_THROWS_AS(acc.add(one, two), ShapeMismatchError);

  VoxelGrid grid;
  grid.spec = GridSpec{};
  grid.voxels = {3, 7};
  grid.semantic_target = {0, 0};
  grid.instance_target = {0, 0};
  PanopticPrediction pred;
  pred.spec = grid.spec;
  pred.voxels = {3, 8};
  pred.records.resize(2);
  CHECK_THROWS_AS(evaluate(pred, grid, v), ShapeMismatchError);
  CHECK_THROWS_AS(evaluate(PanopticPrediction{}, VoxelGrid{}, v), EmptySceneError);
}
