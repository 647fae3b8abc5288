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
#include <map>
#include <numeric>
#include <set>

#include "evipan/errors.hpp"
#include "evipan/inference.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace evipan;
using evipan::test::Gen;
using evipan::test::ScratchDir;

namespace {

const GridSpec kSmall{4, 6, 3, 1.0, 5.0, -1.0, 1.0};

/// Canonical form of a clustering: the set of clusters, each a set of
/// original point ids, plus the noise set.
std::pair<std::set<std::set<std::size_t>>, std::set<std::size_t>> canonical(
    const std::vector<std::int64_t>& labels, const std::vector<std::size_t>& ids) {
  std::map<std::int64_t, std::set<std::size_t>> groups;
  std::set<std::size_t> noise;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == kNoise) {
      noise.insert(ids[i]);
    } else {
      groups[labels[i]].insert(ids[i]);
    }
  }
  std::set<std::set<std::size_t>> out;
  for (auto& [l, s] : groups) {
    out.insert(s);
  }
  return {out, noise};
}

VoxelGrid random_grid(Gen& g, std::size_t n) {
  VoxelGrid grid;
  grid.spec = kSmall;
  std::vector<std::uint32_t> all(kSmall.voxel_count());
  std::iota(all.begin(), all.end(), 0u);
  std::shuffle(all.begin(), all.end(), g.engine());
  grid.voxels.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n));
  std::sort(grid.voxels.begin(), grid.voxels.end());
  return grid;
}

struct RandomFusion {
  VoxelGrid grid;
  std::vector<double> scores, u, phi, var, center;
  std::size_t k = 4, f = 2;

  FusionInputs inputs() const { return {scores, k, u, {phi, f}, var, center}; }
};

RandomFusion random_fusion(Gen& g) {
  RandomFusion r;
  const std::size_t n = static_cast<std::size_t>(g.integer(1, 60));
  r.grid = random_grid(g, n);
  r.scores = g.reals(n * r.k, 0, 1);
  r.u = g.reals(n, 0, 2);
  for (double& u : r.u) {
    u = g.coin(0.1) ? u + 3.0 : u;
  }
  r.phi = g.reals(n * r.f, -2, 2);
  r.var = g.reals(n, 0.1, 1);
  r.center = g.reals(n, 0, 1);
  return r;
}

}  // namespace

TEST_CASE("uncertainty split uses mean plus t standard deviations with a floor") {
  const std::vector<double> u{0.2, 0.4, 0.6};
  const UnknownSplit s = split_unknown(u, {1.0, 0.5});
  CHECK(s.mean == doctest::Approx(0.4));
  CHECK(s.stddev == doctest::Approx(std::sqrt(0.08 / 3)));
  CHECK(s.threshold == doctest::Approx(0.4 + std::sqrt(0.08 / 3)));
  CHECK(s.unknown == std::vector<std::uint8_t>{0, 0, 1});

  const UnknownSplit floored = split_unknown(std::vector<double>{0.1, 0.1, 0.2}, {0.0, 0.5});
  CHECK(floored.threshold == 0.5);
  CHECK(floored.unknown == std::vector<std::uint8_t>{0, 0, 0});

  // A flat scene sits exactly on the threshold and is flagged.
  const UnknownSplit flat = split_unknown(std::vector<double>{0.7, 0.7}, {3.0, 0.5});
  CHECK(flat.threshold == 0.7);
  CHECK(flat.unknown == std::vector<std::uint8_t>{1, 1});

  CHECK_THROWS_AS(split_unknown(std::vector<double>{}, {}), EmptySceneError);
}

TEST_CASE("raising t never adds unknown voxels") {
  evipan::test::for_all(61, 100, [](Gen& g, int) {
    const auto u = g.reals(static_cast<std::size_t>(g.integer(1, 50)), 0, 3);
    const double t1 = g.real(0, 4), t2 = t1 + g.real(0, 2);
    const auto a = split_unknown(u, {t1, 0.5}), b = split_unknown(u, {t2, 0.5});
    for (std::size_t i = 0; i < u.size(); ++i) {
      CHECK(b.unknown[i] <= a.unknown[i]);
    }
  });
}

TEST_CASE("centers are strict local maxima ordered by score") {
  CenterHeatmap h{kSmall, std::vector<double>(kSmall.voxel_count(), 0.0), 2.0};
  auto set = [&](VoxelIndex v, double x) { h.values[linear_index(kSmall, v)] = x; };
  set({0, 0, 0}, 0.6);  // corner peak, neighborhood truncated
  set({2, 3, 1}, 0.9);
  set({2, 4, 1}, 0.5);  // shoulder of the 0.9 peak
  set({3, 0, 2}, 0.3);  // plateau of two equal values: no strict maximum
  set({3, 1, 2}, 0.3);
  set({0, 5, 2}, 0.05);  // below min_score

  CHECK(detect_centers(h, 0.1, 10) == std::vector<VoxelIndex>{{2, 3, 1}, {0, 0, 0}});
  CHECK(detect_centers(h, 0.1, 1) == std::vector<VoxelIndex>{{2, 3, 1}});
  CHECK(detect_centers(h, 0.7, 10) == std::vector<VoxelIndex>{{2, 3, 1}});
  CHECK(detect_centers(h, 0.01, 10).size() == 3);

  // The angular axis does not wrap: a = 0 and a = w - 1 are not neighbors,
  // so both peaks survive. (0,0,0) now loses to (1,0,0).
  set({1, 5, 0}, 0.8);
  set({1, 0, 0}, 0.7);
  CHECK(detect_centers(h, 0.1, 10) == std::vector<VoxelIndex>{{2, 3, 1}, {1, 5, 0}, {1, 0, 0}});
}

TEST_CASE("known voxels go to the best-scoring prototype") {
  const std::vector<double> phi{0.0, 0.0, 1.0, 0.0, 3.0, 0.0, 0.5, 0.0};
  const std::vector<InstancePrototype> protos{{{0.0, 0.0}, 1.0, 0}, {{3.0, 0.0}, 1.0, 2}};
  const std::vector<std::uint8_t> mask{1, 1, 1, 0};
  CHECK(assign_known_instances({phi, 2}, protos, mask) == std::vector<std::int64_t>{0, 0, 1, kUnassigned});

  // Distance 1 from a tight prototype loses to distance 2 from a wide one.
  const std::vector<InstancePrototype> mixed{{{0.0, 0.0}, 0.1, 0}, {{3.0, 0.0}, 10.0, 2}};
  CHECK(assign_known_instances({phi, 2}, mixed, mask)[1] == 1);

  const std::vector<InstancePrototype> twins{{{1.0, 0.0}, 1.0, 0}, {{1.0, 0.0}, 1.0, 0}};
  CHECK(assign_known_instances({phi, 2}, twins, mask) == std::vector<std::int64_t>{0, 0, 0, kUnassigned});

  // Far beyond exp underflow the log-space comparison still separates them.
  const std::vector<double> far{1000.0, 0.0};
  const std::vector<InstancePrototype> distant{{{0.0, 0.0}, 1.0, 0}, {{1.0, 0.0}, 1.0, 0}};
  CHECK(assign_known_instances({far, 2}, distant, std::vector<std::uint8_t>{1})[0] == 1);

  CHECK(assign_known_instances({phi, 2}, {}, mask) ==
        std::vector<std::int64_t>{kFallbackInstance, kFallbackInstance, kFallbackInstance, kUnassigned});
}

TEST_CASE("assignment agrees with a brute-force argmax of association scores") {
  evipan::test::for_all(62, 100, [](Gen& g, int) {
    const std::size_t f = static_cast<std::size_t>(g.integer(1, 4));
    const std::size_t n = static_cast<std::size_t>(g.integer(1, 40));
    const auto phi = g.reals(n * f, -2, 2);
    std::vector<InstancePrototype> protos(static_cast<std::size_t>(g.integer(1, 6)));
    for (auto& p : protos) {
      p.mu = g.reals(f, -2, 2);
      p.sigma_sq = g.real(0.2, 2);
    }
    std::vector<std::uint8_t> mask(n);
    for (auto& m : mask) {
      m = g.coin(0.8) ? 1 : 0;
    }
    const auto got = assign_known_instances({phi, f}, protos, mask);
    const EmbeddingView view{phi, f};
    for (std::size_t v = 0; v < n; ++v) {
      std::int64_t want = kUnassigned;
      if (mask[v]) {
        double best = -1.0;
        for (std::size_t c = 0; c < protos.size(); ++c) {
          const double s = association_score(view.row(v), protos[c]);
          if (s > best) {
            best = s;
            want = static_cast<std::int64_t>(c);
          }
        }
      }
      CHECK(got[v] == want);
    }
  });
}

TEST_CASE("instance semantics are voted among thing classes") {
  const Vocabulary vocab({40}, {10, 20}, {}, {});  // 0 stuff, 1 and 2 things
  const std::vector<std::int64_t> inst{0, 0, 0, 1, 1, 2, 2, -1};
  const std::vector<std::uint32_t> cls{2, 2, 1, 0, 0, 1, 2, 1};
  CHECK(vote_instance_semantics(inst, 3, cls, vocab) == std::vector<std::uint32_t>{2, 0, 1});
  CHECK_THROWS_AS(vote_instance_semantics(inst, 3, std::vector<std::uint32_t>{1}, vocab), ShapeMismatchError);
}

TEST_CASE("dbscan examples") {
  // A chain whose ends are border points.
  const std::vector<double> chain{0.0, 0.1, 0.2, 0.3, 0.4, 5.0};
  CHECK(dbscan({chain, 1}, 0.15, 3) == std::vector<std::int64_t>{0, 0, 0, 0, 0, kNoise});
  CHECK(dbscan({chain, 1}, 0.15, 7) == std::vector<std::int64_t>(6, kNoise));
  CHECK(dbscan({chain, 1}, 10.0, 1) == std::vector<std::int64_t>(6, 0));

  // A border point equidistant from two clusters joins the lower core index.
  const std::vector<double> c_first{2.0, 2.1, 2.2, 2.3, 0.0, -0.1, -0.2, -0.3, 1.0};
  const std::vector<double> a_first{0.0, -0.1, -0.2, -0.3, 2.0, 2.1, 2.2, 2.3, 1.0};
  CHECK(dbscan({c_first, 1}, 1.0, 4).back() == 0);
  CHECK(dbscan({a_first, 1}, 1.0, 4).back() == 0);
  CHECK(dbscan({c_first, 1}, 1.0, 4)[4] == 1);

  CHECK(dbscan({std::vector<double>{}, 2}, 0.5, 5).empty());
  CHECK_THROWS_AS(dbscan({chain, 1}, 0.0, 3), DomainError);
  CHECK_THROWS_AS(dbscan({chain, 1}, 0.5, 0), DomainError);
}

TEST_CASE("dbscan agrees with a union-find oracle") {
  evipan::test::for_all(63, 50, [](Gen& g, int) {
    const std::size_t dim = static_cast<std::size_t>(g.integer(1, 3));
    const auto pts = evipan::test::dbscan_blobs(g, dim);
    REQUIRE(pts.size() / dim <= 200);
    const double eps = g.real(0.1, 1.0);
    const std::size_t min_pts = static_cast<std::size_t>(g.integer(1, 8));
    CHECK(dbscan({pts, dim}, eps, min_pts) == evipan::test::oracle_dbscan(pts, dim, eps, min_pts));
  });
}

TEST_CASE("dbscan partitions do not depend on input order") {
  evipan::test::for_all(64, 30, [](Gen& g, int) {
    const std::size_t dim = 2;
    const auto pts = evipan::test::dbscan_blobs(g, dim);
    const std::size_t n = pts.size() / dim;
    std::vector<std::size_t> ids(n), perm(n);
    std::iota(ids.begin(), ids.end(), 0);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), g.engine());
    std::vector<double> shuffled(pts.size());
    for (std::size_t i = 0; i < n; ++i) {
      std::copy_n(pts.begin() + static_cast<std::ptrdiff_t>(perm[i] * dim), dim,
                  shuffled.begin() + static_cast<std::ptrdiff_t>(i * dim));
    }
    CHECK(canonical(dbscan({pts, dim}, 0.5, 5), ids) == canonical(dbscan({shuffled, dim}, 0.5, 5), perm));
  });
}

TEST_CASE("fusion example covers every voxel kind") {
  const Vocabulary vocab = Vocabulary::synthetic_default();  // 0-2 stuff, 3 car
  VoxelGrid grid;
  grid.spec = kSmall;
  const std::vector<VoxelIndex> at{{0, 0, 0}, {2, 2, 1}, {2, 3, 1}, {3, 5, 2}, {0, 4, 2}, {1, 4, 2}};
  for (const auto& v : at) {
    grid.voxels.push_back(static_cast<std::uint32_t>(linear_index(kSmall, v)));
  }
  std::sort(grid.voxels.begin(), grid.voxels.end());
  // Row order follows the sorted linear ids; rebuild inputs in that order.
  const std::size_t n = grid.size();
  std::vector<double> scores(n * 4, 0.0), u(n, 0.1), phi(n, 0.0), var(n, 1.0), center(n, 0.0);
  auto row = [&](VoxelIndex v) { return *grid.row_of(v); };
  scores[row({0, 0, 0}) * 4 + 1] = 1.0;  // stuff
  for (VoxelIndex v : {VoxelIndex{2, 2, 1}, VoxelIndex{2, 3, 1}}) {
    scores[row(v) * 4 + 3] = 1.0;  // car
  }
  center[row({2, 2, 1})] = 0.9;
  center[row({2, 3, 1})] = 0.4;
  phi[row({2, 3, 1})] = 0.2;
  scores[row({3, 5, 2}) * 4 + 3] = 1.0;  // a lone car voxel far away in the embedding
  phi[row({3, 5, 2})] = 5.0;
  for (VoxelIndex v : {VoxelIndex{0, 4, 2}, VoxelIndex{1, 4, 2}}) {
    u[row(v)] = 3.0;
  }

  InferenceConfig cfg;
  cfg.threshold = {1.0, 0.5};
  cfg.dbscan_min_pts = 2;
  const FusionInputs in{scores, 4, u, {phi, 1}, var, center};
  const PanopticPrediction p = fuse(grid, in, vocab, cfg);
  REQUIRE(p.size() == n);
  CHECK(p.records[row({0, 0, 0})] == VoxelPrediction{VoxelKind::kStuff, 1, 0, 0.1});
  CHECK(p.records[row({2, 2, 1})] == VoxelPrediction{VoxelKind::kThing, 3, 1, 0.1});
  CHECK(p.records[row({2, 3, 1})] == VoxelPrediction{VoxelKind::kThing, 3, 1, 0.1});
  // Its center value 0 is no peak, so it still joins the only prototype.
  CHECK(p.records[row({3, 5, 2})].instance_id == 1);
  CHECK(p.records[row({0, 4, 2})] == VoxelPrediction{VoxelKind::kUnknown, -1, 2, 3.0});
  CHECK(p.records[row({1, 4, 2})] == VoxelPrediction{VoxelKind::kUnknown, -1, 2, 3.0});

  cfg.dbscan_min_pts = 3;
  const PanopticPrediction q = fuse(grid, in, vocab, cfg);
  CHECK(q.records[row({0, 4, 2})].kind == VoxelKind::kUnknownNoise);
  CHECK(q.records[row({0, 4, 2})].instance_id == 0);

  // Without any center above the score floor, things fall back.
  cfg.center_min_score = 0.95;
  CHECK(fuse(grid, in, vocab, cfg).records[row({3, 5, 2})] == VoxelPrediction{VoxelKind::kThing, 3, 1, 0.1});
  cfg.fallback = FallbackMode::kUnsegmented;
  CHECK(fuse(grid, in, vocab, cfg).records[row({3, 5, 2})] == VoxelPrediction{VoxelKind::kStuff, 3, 0, 0.1});

  const FusionInputs wrong_k{scores, 3, u, {phi, 1}, var, center};
  CHECK_THROWS_AS(fuse(grid, wrong_k, vocab, cfg), ShapeMismatchError);
  const FusionInputs short_u{scores, 4, std::span<const double>(u).first(2), {phi, 1}, var, center};
  CHECK_THROWS_AS(fuse(grid, short_u, vocab, cfg), ShapeMismatchError);
}

TEST_CASE("fusion gives every voxel exactly one consistent label") {
  const Vocabulary vocab = Vocabulary::synthetic_default();
  evipan::test::for_all(65, 100, [&](Gen& g, int) {
    const RandomFusion r = random_fusion(g);
    InferenceConfig cfg;
    cfg.threshold.t = g.real(0, 3);
    cfg.dbscan_min_pts = static_cast<std::size_t>(g.integer(1, 5));
    cfg.fallback = g.coin() ? FallbackMode::kPerClass : FallbackMode::kUnsegmented;
    const PanopticPrediction p = fuse(r.grid, r.inputs(), vocab, cfg);
    const UnknownSplit split = split_unknown(r.u, cfg.threshold);
    CHECK(p.threshold == split.threshold);
    CHECK(p.voxels == r.grid.voxels);
    for (std::size_t v = 0; v < r.grid.size(); ++v) {
      const VoxelPrediction& rec = p.records[v];
      CHECK(rec.uncertainty == r.u[v]);
      const auto row = std::span<const double>(r.scores).subspan(v * r.k, r.k);
      const auto argmax = static_cast<std::int64_t>(std::max_element(row.begin(), row.end()) - row.begin());
      if (split.unknown[v]) {
        // The split is final: no unknown voxel ever receives a known class.
        CHECK((rec.kind == VoxelKind::kUnknown || rec.kind == VoxelKind::kUnknownNoise));
        CHECK(rec.class_id == -1);
        CHECK((rec.kind == VoxelKind::kUnknown) == (rec.instance_id > 0));
      } else if (rec.kind == VoxelKind::kStuff) {
        CHECK(rec.class_id == argmax);
        CHECK(rec.instance_id == 0);
      } else {
        REQUIRE(rec.kind == VoxelKind::kThing);
        CHECK(vocab.is_thing(static_cast<std::size_t>(rec.class_id)));
        CHECK(vocab.is_thing(static_cast<std::size_t>(argmax)));
        CHECK(rec.instance_id > 0);
      }
    }
  });
}

TEST_CASE("prediction files round-trip in both formats") {
  ScratchDir dir("pred");
  evipan::test::for_all(66, 20, [&](Gen& g, int) {
    const VoxelGrid grid = random_grid(g, static_cast<std::size_t>(g.integer(0, 40)));
    PanopticPrediction p;
    p.spec = grid.spec;
    p.voxels = grid.voxels;
    p.threshold = g.real(0, 2);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const auto kind = static_cast<VoxelKind>(g.integer(0, 3));
      p.records.push_back({kind, kind < VoxelKind::kUnknown ? g.integer(0, 3) : -1,
                           static_cast<std::uint64_t>(g.integer(0, 1000)), g.real(0, 5) / 3.0});
    }
    write_prediction_text(p, dir / "p.txt");
    write_prediction_binary(p, dir / "p.bin");
    CHECK(read_prediction(dir / "p.txt") == p);
    CHECK(read_prediction(dir / "p.bin") == p);
  });
  evipan::test::write_bytes(dir / "junk", {'n', 'o', 'p', 'e'});
  CHECK_THROWS_AS(read_prediction(dir / "junk"), FormatError);
  CHECK_THROWS_AS(read_prediction(dir / "absent"), IoError);
  CHECK(parse_kind(kind_name(VoxelKind::kUnknownNoise)) == VoxelKind::kUnknownNoise);
  CHECK_THROWS_AS(parse_kind("MAYBE"), FormatError);
}
