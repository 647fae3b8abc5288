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

// Polar voxel grid: (radial, angular, height) bins over a cylinder around the
// sensor, per-voxel hand-crafted features, majority-vote targets and the
// Gaussian center heatmap.

#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "evipan/pointcloud_io.hpp"

namespace evipan {

/// Semantic target of voxels holding no points. Outside the 16-bit label
/// range, so it never collides with a class index or a point-label sentinel.
inline constexpr std::uint32_t kEmptyLabel = 0x10000;

struct GridSpec {
  int h = 96;  // radial bins
  int w = 72;  // angular bins
  int z = 16;  // height bins
  double r_min = 1.0;
  double r_max = 21.0;
  double z_min = -2.0;
  double z_max = 2.0;

  /// The full-scale SemanticKITTI discretization.
  static GridSpec kitti() { return {480, 360, 32, 1.0, 60.0, -3.0, 3.0}; }

  void validate() const;
  std::size_t voxel_count() const {
    return static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * static_cast<std::size_t>(z);
  }
  double radial_step() const { return (r_max - r_min) / h; }
  double angular_step() const;
  double height_step() const { return (z_max - z_min) / z; }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

struct VoxelIndex {
  int r = 0;  // radial bin
  int a = 0;  // angular bin
  int z = 0;  // height bin

  friend auto operator<=>(const VoxelIndex&, const VoxelIndex&) = default;
};

std::size_t linear_index(const GridSpec& spec, const VoxelIndex& v);
VoxelIndex voxel_index(const GridSpec& spec, std::size_t linear);
bool in_bounds(const GridSpec& spec, const VoxelIndex& v);

/// Bin of a Cartesian point, or nullopt when it falls outside the half-open
/// ranges [r_min, r_max) x [z_min, z_max).
std::optional<VoxelIndex> bin_point(const GridSpec& spec, double x, double y, double z);

/// Cartesian center of a voxel.
std::array<double, 3> voxel_center_xyz(const GridSpec& spec, const VoxelIndex& v);

/// Number of hand-crafted features per voxel:
///   0     log(1 + point count)
///   1     mean z, mapped to [-1, 1] over [z_min, z_max]
///   2     std of z, in height-bin units
///   3     mean intensity
///   4     mean r, mapped to [0, 1] over [r_min, r_max]
///   5..7  mean residual of the points from the voxel center in (r, theta, z),
///         each in units of the corresponding bin size
///   8, 9  mean x and mean y divided by r_max
inline constexpr std::size_t kFeatureDim = 10;

/// Sparse voxel grid. Only non-empty voxels are stored; row i of every
/// per-voxel array describes voxel `voxels[i]` (ascending linear index).
struct VoxelGrid {
  GridSpec spec;
  std::vector<std::uint32_t> voxels;
  std::vector<std::uint32_t> occupancy;
  std::vector<double> features;  // row-major, voxels.size() x kFeatureDim
  std::vector<std::uint32_t> semantic_target;
  std::vector<std::uint32_t> instance_target;
  /// CSR mapping row -> contributing point indices.
  std::vector<std::size_t> point_offsets;
  std::vector<std::uint32_t> point_indices;
  std::size_t dropped_points = 0;

  std::size_t size() const { return voxels.size(); }
  /// Row of a voxel, or nullopt when it is empty.
  std::optional<std::size_t> row_of(const VoxelIndex& v) const;
  VoxelIndex index_of_row(std::size_t row) const { return voxel_index(spec, voxels[row]); }
  std::uint32_t occupancy_at(const VoxelIndex& v) const;
  std::uint32_t semantic_at(const VoxelIndex& v) const;
  std::span<const std::uint32_t> points_of_row(std::size_t row) const {
    return {point_indices.data() + point_offsets[row], point_offsets[row + 1] - point_offsets[row]};
  }
  std::span<const double> feature_row(std::size_t row) const {
    return {features.data() + row * kFeatureDim, kFeatureDim};
  }
  /// Point index -> row, or -1 for dropped points.
  std::vector<std::int64_t> point_to_row(std::size_t point_count) const;
};

/// Bins every point, drops out-of-range points and computes features.
/// Semantic targets start as IGNORE until majority_vote_targets runs.
VoxelGrid voxelize(const Scene& scene, const GridSpec& spec);

/// Semantic target = modal point label (ties -> lowest id); instance target =
/// modal instance among points carrying the winning label (ties -> lowest).
VoxelGrid majority_vote_targets(VoxelGrid grid, std::span<const PointLabel> labels);

/// Voxels inside [lo, hi) on every axis are kept; the rest become empty.
VoxelGrid select_window(const VoxelGrid& grid, const VoxelIndex& lo, const VoxelIndex& hi);

/// Ground-truth thing instance and its real-valued voxel-space centroid.
struct InstanceCentroid {
  std::uint32_t semantic = 0;
  std::uint32_t instance = 0;
  std::array<double, 3> centroid{};  // (r, a, z) bin coordinates
  std::size_t center_row = 0;        // member voxel nearest to the centroid
  std::vector<std::size_t> rows;     // member voxels
};

/// Groups voxels by (semantic, instance) for instance ids > 0 whose semantic
/// target passes `keep`. Results are ordered by (semantic, instance).
template <typename Pred>
std::vector<InstanceCentroid> instance_centroids(const VoxelGrid& grid, Pred keep);

std::vector<InstanceCentroid> thing_centroids(const VoxelGrid& grid, const Vocabulary& vocab);

struct CenterHeatmap {
  GridSpec spec;
  std::vector<double> values;  // dense, spec.voxel_count()
  double sigma = 2.0;

  double at(const VoxelIndex& v) const { return values[linear_index(spec, v)]; }
};

/// H_v = max_i exp(-|v - c_i|^2 / (2 sigma^2)) over known-thing centroids.
CenterHeatmap render_center_heatmap(const VoxelGrid& grid, const Vocabulary& vocab,
                                    double sigma = 2.0);
CenterHeatmap render_center_heatmap(const GridSpec& spec,
                                    std::span<const std::array<double, 3>> centroids,
                                    double sigma);

/// Dense heatmap with `values[row]` written at each non-empty voxel.
CenterHeatmap scatter_heatmap(const VoxelGrid& grid, std::span<const double> values, double sigma);
std::vector<double> gather_heatmap(const VoxelGrid& grid, const CenterHeatmap& heatmap);

// ---------------------------------------------------------------------------

template <typename Pred>
std::vector<InstanceCentroid> instance_centroids(const VoxelGrid& grid, Pred keep) {
  std::vector<InstanceCentroid> out;
  std::vector<std::pair<std::pair<std::uint32_t, std::uint32_t>, std::size_t>> keyed;
  for (std::size_t row = 0; row < grid.size(); ++row) {
    const std::uint32_t sem = grid.semantic_target[row];
    const std::uint32_t inst = grid.instance_target[row];
    if (inst > 0 && keep(sem)) {
      keyed.push_back({{sem, inst}, row});
    }
  }
  std::stable_sort(keyed.begin(), keyed.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 0; i < keyed.size();) {
    InstanceCentroid c;
    c.semantic = keyed[i].first.first;
    c.instance = keyed[i].first.second;
    std::size_t j = i;
    for (; j < keyed.size() && keyed[j].first == keyed[i].first; ++j) {
      const VoxelIndex v = grid.index_of_row(keyed[j].second);
      c.centroid[0] += v.r;
      c.centroid[1] += v.a;
      c.centroid[2] += v.z;
      c.rows.push_back(keyed[j].second);
    }
    for (double& x : c.centroid) {
      x /= static_cast<double>(c.rows.size());
    }
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t row : c.rows) {
      const VoxelIndex v = grid.index_of_row(row);
      const double d = (v.r - c.centroid[0]) * (v.r - c.centroid[0]) +
                       (v.a - c.centroid[1]) * (v.a - c.centroid[1]) +
                       (v.z - c.centroid[2]) * (v.z - c.centroid[2]);
      if (d < best) {
        best = d;
        c.center_row = row;
      }
    }
    out.push_back(std::move(c));
    i = j;
  }
  return out;
}

}  // namespace evipan
