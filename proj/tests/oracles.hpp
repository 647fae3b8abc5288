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

// Brute-force reference implementations and their input generators, shared
// by the unit tests and the acceptance runner. Written for clarity, not
// speed.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <tuple>
#include <vector>

#include "evipan/metrics.hpp"
#include "evipan/polar_grid.hpp"
#include "support.hpp"

namespace evipan::test {

/// DBSCAN via union-find over core-core edges; components numbered by their
/// lowest core index, border points to the nearest core within eps.
inline std::vector<std::int64_t> oracle_dbscan(const std::vector<double>& pts, std::size_t dim,
                                               double eps, std::size_t min_pts) {
  const std::size_t n = pts.size() / dim;
  auto d2 = [&](std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      s += (pts[i * dim + k] - pts[j * dim + k]) * (pts[i * dim + k] - pts[j * dim + k]);
    }
    return s;
  };
  std::vector<bool> core(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t count = 0;
    for (std::size_t j = 0; j < n; ++j) {
      count += d2(i, j) <= eps * eps ? 1 : 0;
    }
    core[i] = count >= min_pts;
  }
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) {
      x = parent[x] = parent[parent[x]];
    }
    return x;
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (core[i] && core[j] && d2(i, j) <= eps * eps) {
        const std::size_t a = find(i), b = find(j);
        parent[std::max(a, b)] = std::min(a, b);
      }
    }
  }
  std::map<std::size_t, std::int64_t> id_of_root;
  std::vector<std::int64_t> label(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    if (core[i]) {
      label[i] = id_of_root.emplace(find(i), static_cast<std::int64_t>(id_of_root.size())).first->second;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (core[i]) {
      continue;
    }
    std::size_t best = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (core[j] && d2(i, j) <= eps * eps && (best == n || d2(i, j) < d2(i, best))) {
        best = j;
      }
    }
    if (best < n) {
      label[i] = label[best];
    }
  }
  return label;
}

/// Gaussian blobs plus uniform clutter, at most 180 points.
inline std::vector<double> dbscan_blobs(Gen& g, std::size_t dim) {
  std::vector<double> pts;
  const int clusters = static_cast<int>(g.integer(1, 4));
  for (int c = 0; c < clusters; ++c) {
    const auto center = g.reals(dim, -5, 5);
    const double spread = g.real(0.05, 0.4);
    for (std::int64_t k = g.integer(3, 40); k > 0; --k) {
      for (std::size_t d = 0; d < dim; ++d) {
        pts.push_back(center[d] + g.normal(0, spread));
      }
    }
  }
  for (std::int64_t k = g.integer(0, 20); k > 0; --k) {
    for (std::size_t d = 0; d < dim; ++d) {
      pts.push_back(g.real(-6, 6));
    }
  }
  return pts;
}

/// Same partition up to relabeling, with identical noise sets.
inline bool same_partition(const std::vector<std::int64_t>& a, const std::vector<std::int64_t>& b) {
  if (a.size() != b.size()) {
    return false;
  }
  std::map<std::int64_t, std::int64_t> ab, ba;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if ((a[i] < 0) != (b[i] < 0)) {
      return false;
    }
    if (a[i] < 0) {
      continue;
    }
    if (ab.emplace(a[i], b[i]).first->second != b[i] || ba.emplace(b[i], a[i]).first->second != a[i]) {
      return false;
    }
  }
  return true;
}

struct OracleCounts {
  double iou_sum = 0;
  int tp = 0, fp = 0, fn = 0;
};

/// Materializes every segment of `cls` as an element set and compares every
/// predicted segment against every ground-truth segment.
inline OracleCounts oracle_segments(const std::vector<ElementLabel>& pred,
                                    const std::vector<ElementLabel>& gt, std::int64_t cls) {
  std::map<std::uint64_t, std::set<std::size_t>> ps, gs;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i].class_id == kVoidClass) {
      continue;
    }
    if (pred[i].class_id == cls) {
      ps[pred[i].instance].insert(i);
    }
    if (gt[i].class_id == cls) {
      gs[gt[i].instance].insert(i);
    }
  }
  OracleCounts c;
  std::set<std::uint64_t> hit_p, hit_g;
  for (const auto& [pi, p] : ps) {
    for (const auto& [gi, s] : gs) {
      std::vector<std::size_t> both, either;
      std::set_intersection(p.begin(), p.end(), s.begin(), s.end(), std::back_inserter(both));
      std::set_union(p.begin(), p.end(), s.begin(), s.end(), std::back_inserter(either));
      // IoU > 1/2 written without division.
      if (2 * both.size() > either.size()) {
        c.iou_sum += static_cast<double>(both.size()) / static_cast<double>(either.size());
        ++c.tp;
        hit_p.insert(pi);
        hit_g.insert(gi);
      }
    }
  }
  c.fp = static_cast<int>(ps.size() - hit_p.size());
  c.fn = static_cast<int>(gs.size() - hit_g.size());
  return c;
}

inline double oracle_pq(const OracleCounts& c) {
  const double d = c.tp + 0.5 * c.fp + 0.5 * c.fn;
  return d > 0 ? c.iou_sum / d : 0.0;
}

inline double oracle_sq(const OracleCounts& c) { return c.tp > 0 ? c.iou_sum / c.tp : 0.0; }

inline double oracle_rq(const OracleCounts& c) {
  const double d = c.tp + 0.5 * c.fp + 0.5 * c.fn;
  return d > 0 ? c.tp / d : 0.0;
}

/// Element labels over classes 0, 1 (stuff), 2, 3 (things), unknown and
/// void; predictions are noisy copies of the ground truth. At most 4
/// instances per thing class plus 4 unknown ones, so at most 14 segments.
inline std::pair<std::vector<ElementLabel>, std::vector<ElementLabel>> random_label_scene(Gen& g) {
  const std::size_t n = static_cast<std::size_t>(g.integer(1, 300));
  std::vector<ElementLabel> gt(n), pred(n);
  auto random_label = [&]() -> ElementLabel {
    const int pick = static_cast<int>(g.integer(0, 5));
    if (pick <= 1) return {pick, 0};
    if (pick <= 3) return {pick, static_cast<std::uint64_t>(g.integer(1, 4))};
    if (pick == 4) return {kUnknownClass, static_cast<std::uint64_t>(g.integer(1, 4))};
    return {};
  };
  for (auto& l : gt) {
    l = random_label();
  }
  // Contiguous runs make segments large enough to be matched sometimes.
  std::sort(gt.begin(), gt.end(), [](const ElementLabel& a, const ElementLabel& b) {
    return std::tie(a.class_id, a.instance) < std::tie(b.class_id, b.instance);
  });
  const double noise = g.real(0, 0.6);
  for (std::size_t i = 0; i < n; ++i) {
    pred[i] = g.coin(noise) ? random_label() : gt[i];
  }
  return {pred, gt};
}

/// Points clustered around a few hot spots so voxels collect several points
/// with mixed remapped labels, some outside the grid.
inline Scene random_hotspot_scene(Gen& g, std::size_t n, const GridSpec& spec, std::uint32_t classes,
                                  std::uint32_t instances) {
  Scene s;
  s.label_space = LabelSpace::kRemapped;
  std::vector<std::array<double, 3>> spots;
  for (int i = 0; i < 20; ++i) {
    const double r = g.real(spec.r_min, spec.r_max * 1.05);
    const double th = g.real(-std::numbers::pi, std::numbers::pi);
    spots.push_back({r * std::cos(th), r * std::sin(th), g.real(spec.z_min - 0.2, spec.z_max)});
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = spots[g.index(spots.size())];
    s.points.push_back({c[0] + g.normal(0, 0.2), c[1] + g.normal(0, 0.2), c[2] + g.normal(0, 0.1),
                        g.real(0, 1)});
    std::uint32_t sem = static_cast<std::uint32_t>(g.integer(0, classes - 1));
    if (g.coin(0.1)) {
      sem = g.coin() ? kUnknownLabel : kIgnoreLabel;
    }
    s.labels.push_back({sem, static_cast<std::uint32_t>(g.integer(0, instances))});
  }
  return s;
}

struct OracleVote {
  std::size_t linear = 0;
  std::uint32_t semantic = 0;
  std::uint32_t instance = 0;
};

/// Bins points independently and takes the modal semantic label per voxel
/// (lowest id on ties), then the modal instance among the points carrying it.
inline std::vector<OracleVote> oracle_majority_vote(const Scene& s, const GridSpec& spec) {
  std::map<std::size_t, std::map<std::uint32_t, std::map<std::uint32_t, int>>> hist;
  for (std::size_t p = 0; p < s.points.size(); ++p) {
    if (auto v = bin_point(spec, s.points[p].x, s.points[p].y, s.points[p].z)) {
      ++hist[linear_index(spec, *v)][s.labels[p].semantic_id][s.labels[p].instance_id];
    }
  }
  std::vector<OracleVote> out;
  for (const auto& [lin, by_sem] : hist) {
    OracleVote vote{lin, 0, 0};
    int best = -1;
    for (const auto& [sem, by_inst] : by_sem) {
      int total = 0;
      for (const auto& [inst, c] : by_inst) {
        total += c;
      }
      if (total > best) {  // ascending keys: first maximum is the lowest id
        best = total;
        vote.semantic = sem;
      }
    }
    best = -1;
    for (const auto& [inst, c] : by_sem.at(vote.semantic)) {
      if (c > best) {
        best = c;
        vote.instance = inst;
      }
    }
    out.push_back(vote);
  }
  return out;
}

}  // namespace evipan::test
