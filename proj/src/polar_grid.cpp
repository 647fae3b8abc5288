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

#include "evipan/polar_grid.hpp"

#include <cmath>
#include <numbers>

#include "evipan/errors.hpp"

namespace evipan {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

void GridSpec::validate() const {
  if (h <= 0 || w <= 0 || z <= 0) {
    throw SpecError("grid: bin counts must be positive");
  }
  if (!(r_min < r_max) || r_min < 0.0 || !(z_min < z_max)) {
    throw SpecError("grid: require 0 <= r_min < r_max and z_min < z_max");
  }
  if (voxel_count() > std::numeric_limits<std::uint32_t>::max()) {
    throw SpecError("grid: too many voxels");
  }
}

double GridSpec::angular_step() const { return kTwoPi / w; }

std::size_t linear_index(const GridSpec& spec, const VoxelIndex& v) {
  return (static_cast<std::size_t>(v.r) * static_cast<std::size_t>(spec.w) +
          static_cast<std::size_t>(v.a)) *
             static_cast<std::size_t>(spec.z) +
         static_cast<std::size_t>(v.z);
}

VoxelIndex voxel_index(const GridSpec& spec, std::size_t linear) {
  VoxelIndex v;
  v.z = static_cast<int>(linear % static_cast<std::size_t>(spec.z));
  linear /= static_cast<std::size_t>(spec.z);
  v.a = static_cast<int>(linear % static_cast<std::size_t>(spec.w));
  v.r = static_cast<int>(linear / static_cast<std::size_t>(spec.w));
  return v;
}

bool in_bounds(const GridSpec& spec, const VoxelIndex& v) {
  return v.r >= 0 && v.r < spec.h && v.a >= 0 && v.a < spec.w && v.z >= 0 && v.z < spec.z;
}

std::optional<VoxelIndex> bin_point(const GridSpec& spec, double x, double y, double z) {
  const double r = std::hypot(x, y);
  if (!(r >= spec.r_min && r < spec.r_max && z >= spec.z_min && z < spec.z_max)) {
    return std::nullopt;
  }
  const double theta = std::atan2(y, x);
  auto bin = [](double frac, int n) {
    // frac lies in [0, 1]; rounding can land exactly on n.
    return std::clamp(static_cast<int>(std::floor(frac * n)), 0, n - 1);
  };
  return VoxelIndex{bin((r - spec.r_min) / (spec.r_max - spec.r_min), spec.h),
                    bin((theta + std::numbers::pi) / kTwoPi, spec.w),
                    bin((z - spec.z_min) / (spec.z_max - spec.z_min), spec.z)};
}

std::array<double, 3> voxel_center_xyz(const GridSpec& spec, const VoxelIndex& v) {
  const double r = spec.r_min + (v.r + 0.5) * spec.radial_step();
  const double th = -std::numbers::pi + (v.a + 0.5) * spec.angular_step();
  return {r * std::cos(th), r * std::sin(th), spec.z_min + (v.z + 0.5) * spec.height_step()};
}

std::optional<std::size_t> VoxelGrid::row_of(const VoxelIndex& v) const {
  if (!in_bounds(spec, v)) {
    return std::nullopt;
  }
  const auto lin = static_cast<std::uint32_t>(linear_index(spec, v));
  auto it = std::lower_bound(voxels.begin(), voxels.end(), lin);
  if (it == voxels.end() || *it != lin) {
    return std::nullopt;
  }
  return static_cast<std::size_t>(it - voxels.begin());
}

std::uint32_t VoxelGrid::occupancy_at(const VoxelIndex& v) const {
  auto row = row_of(v);
  return row ? occupancy[*row] : 0u;
}

std::uint32_t VoxelGrid::semantic_at(const VoxelIndex& v) const {
  auto row = row_of(v);
  return row ? semantic_target[*row] : kEmptyLabel;
}

std::vector<std::int64_t> VoxelGrid::point_to_row(std::size_t point_count) const {
  std::vector<std::int64_t> map(point_count, -1);
  for (std::size_t row = 0; row < size(); ++row) {
    for (std::uint32_t p : points_of_row(row)) {
      map.at(p) = static_cast<std::int64_t>(row);
    }
  }
  return map;
}

namespace {

void compute_features(VoxelGrid& grid, const Scene& scene) {
  const GridSpec& spec = grid.spec;
  grid.features.assign(grid.size() * kFeatureDim, 0.0);
  const double dr = spec.radial_step(), da = spec.angular_step(), dz = spec.height_step();
  for (std::size_t row = 0; row < grid.size(); ++row) {
    const VoxelIndex v = grid.index_of_row(row);
    const double rc = spec.r_min + (v.r + 0.5) * dr;
    const double ac = -std::numbers::pi + (v.a + 0.5) * da;
    const double zc = spec.z_min + (v.z + 0.5) * dz;
    double sz = 0, szz = 0, si = 0, sr = 0, sx = 0, sy = 0, res_r = 0, res_a = 0;
    const auto pts = grid.points_of_row(row);
    for (std::uint32_t idx : pts) {
      const Point& p = scene.points[idx];
      const double r = std::hypot(p.x, p.y);
      sz += p.z;
      szz += p.z * p.z;
      si += p.intensity;
      sr += r;
      sx += p.x;
      sy += p.y;
      res_r += r - rc;
      res_a += std::atan2(p.y, p.x) - ac;
    }
    const double n = static_cast<double>(pts.size());
    const double mean_z = sz / n;
    const double var_z = std::max(0.0, szz / n - mean_z * mean_z);
    double* f = grid.features.data() + row * kFeatureDim;
    f[0] = std::log1p(n);
    f[1] = 2.0 * (mean_z - spec.z_min) / (spec.z_max - spec.z_min) - 1.0;
    f[2] = std::sqrt(var_z) / dz;
    f[3] = si / n;
    f[4] = (sr / n - spec.r_min) / (spec.r_max - spec.r_min);
    f[5] = (res_r / n) / dr;
    f[6] = (res_a / n) / da;
    f[7] = (mean_z - zc) / dz;
    f[8] = (sx / n) / spec.r_max;
    f[9] = (sy / n) / spec.r_max;
  }
}

}  // namespace

VoxelGrid voxelize(const Scene& scene, const GridSpec& spec) {
  spec.validate();
  VoxelGrid grid;
  grid.spec = spec;

  std::vector<std::pair<std::uint32_t, std::uint32_t>> binned;  // (linear, point)
  binned.reserve(scene.points.size());
  for (std::size_t i = 0; i < scene.points.size(); ++i) {
    const Point& p = scene.points[i];
    if (auto v = bin_point(spec, p.x, p.y, p.z)) {
      binned.emplace_back(static_cast<std::uint32_t>(linear_index(spec, *v)),
                          static_cast<std::uint32_t>(i));
    } else {
      ++grid.dropped_points;
    }
  }
  // Sorting by (voxel, point) fixes the reduction order of every feature sum.
  std::sort(binned.begin(), binned.end());

  grid.point_offsets.push_back(0);
  for (std::size_t i = 0; i < binned.size();) {
    std::size_t j = i;
    while (j < binned.size() && binned[j].first == binned[i].first) {
      grid.point_indices.push_back(binned[j].second);
      ++j;
    }
    grid.voxels.push_back(binned[i].first);
    grid.occupancy.push_back(static_cast<std::uint32_t>(j - i));
    grid.point_offsets.push_back(grid.point_indices.size());
    i = j;
  }
  grid.semantic_target.assign(grid.size(), kIgnoreLabel);
  grid.instance_target.assign(grid.size(), 0);
  compute_features(grid, scene);
  return grid;
}

namespace {

// Most frequent value; ties go to the smallest. `values` is sorted in place.
std::uint32_t modal_value(std::vector<std::uint32_t>& values) {
  std::sort(values.begin(), values.end());
  std::uint32_t best = values.front();
  std::size_t best_count = 0;
  for (std::size_t i = 0; i < values.size();) {
    std::size_t j = i;
    while (j < values.size() && values[j] == values[i]) {
      ++j;
    }
    if (j - i > best_count) {
      best_count = j - i;
      best = values[i];
    }
    i = j;
  }
  return best;
}

}  // namespace

VoxelGrid majority_vote_targets(VoxelGrid grid, std::span<const PointLabel> labels) {
  std::vector<std::uint32_t> scratch;
  for (std::size_t row = 0; row < grid.size(); ++row) {
    const auto pts = grid.points_of_row(row);
    scratch.clear();
    for (std::uint32_t p : pts) {
      scratch.push_back(labels[p].semantic_id);
    }
    const std::uint32_t sem = modal_value(scratch);
    scratch.clear();
    for (std::uint32_t p : pts) {
      if (labels[p].semantic_id == sem) {
        scratch.push_back(labels[p].instance_id);
      }
    }
    grid.semantic_target[row] = sem;
    grid.instance_target[row] = modal_value(scratch);
  }
  return grid;
}

VoxelGrid select_window(const VoxelGrid& grid, const VoxelIndex& lo, const VoxelIndex& hi) {
  VoxelGrid out;
  out.spec = grid.spec;
  out.dropped_points = grid.dropped_points;
  out.point_offsets.push_back(0);
  for (std::size_t row = 0; row < grid.size(); ++row) {
    const VoxelIndex v = grid.index_of_row(row);
    const bool inside = v.r >= lo.r && v.r < hi.r && v.a >= lo.a && v.a < hi.a && v.z >= lo.z &&
                        v.z < hi.z;
    if (!inside) {
      out.dropped_points += grid.occupancy[row];
      continue;
    }
    out.voxels.push_back(grid.voxels[row]);
    out.occupancy.push_back(grid.occupancy[row]);
    const auto f = grid.feature_row(row);
    out.features.insert(out.features.end(), f.begin(), f.end());
    out.semantic_target.push_back(grid.semantic_target[row]);
    out.instance_target.push_back(grid.instance_target[row]);
    const auto pts = grid.points_of_row(row);
    out.point_indices.insert(out.point_indices.end(), pts.begin(), pts.end());
    out.point_offsets.push_back(out.point_indices.size());
  }
  return out;
}

std::vector<InstanceCentroid> thing_centroids(const VoxelGrid& grid, const Vocabulary& vocab) {
  return instance_centroids(grid, [&](std::uint32_t sem) { return vocab.is_thing(sem); });
}

CenterHeatmap render_center_heatmap(const GridSpec& spec,
                                    std::span<const std::array<double, 3>> centroids,
                                    double sigma) {
  if (!(sigma > 0.0)) {
    throw DomainError("heatmap sigma must be positive");
  }
  CenterHeatmap hm{spec, std::vector<double>(spec.voxel_count(), 0.0), sigma};
  if (centroids.empty()) {
    return hm;
  }
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (std::size_t lin = 0; lin < hm.values.size(); ++lin) {
    const VoxelIndex v = voxel_index(spec, lin);
    double best = 0.0;
    for (const auto& c : centroids) {
      const double d2 = (v.r - c[0]) * (v.r - c[0]) + (v.a - c[1]) * (v.a - c[1]) +
                        (v.z - c[2]) * (v.z - c[2]);
      best = std::max(best, std::exp(-d2 * inv));
    }
    hm.values[lin] = best;
  }
  return hm;
}

CenterHeatmap render_center_heatmap(const VoxelGrid& grid, const Vocabulary& vocab, double sigma) {
  std::vector<std::array<double, 3>> centroids;
  for (const auto& c : thing_centroids(grid, vocab)) {
    centroids.push_back(c.centroid);
  }
  return render_center_heatmap(grid.spec, centroids, sigma);
}

CenterHeatmap scatter_heatmap(const VoxelGrid& grid, std::span<const double> values, double sigma) {
  if (values.size() != grid.size()) {
    throw ShapeMismatchError("heatmap values do not match the voxel count");
  }
  CenterHeatmap hm{grid.spec, std::vector<double>(grid.spec.voxel_count(), 0.0), sigma};
  for (std::size_t row = 0; row < grid.size(); ++row) {
    hm.values[grid.voxels[row]] = values[row];
  }
  return hm;
}

std::vector<double> gather_heatmap(const VoxelGrid& grid, const CenterHeatmap& heatmap) {
  if (!(heatmap.spec == grid.spec)) {
    throw ShapeMismatchError("heatmap grid differs from voxel grid");
  }
  std::vector<double> out(grid.size());
  for (std::size_t row = 0; row < grid.size(); ++row) {
    out[row] = heatmap.values[grid.voxels[row]];
  }
  return out;
}

}  // namespace evipan
