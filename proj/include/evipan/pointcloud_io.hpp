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

// Point-cloud data model, SemanticKITTI-format I/O and the synthetic scene
// generator.
//
// Label files store one little-endian 32-bit word per point: the low 16 bits
// hold the semantic id, the high 16 bits the instance id. Point files store
// four little-endian IEEE-754 floats per point (x, y, z, intensity).

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace evipan {

/// Sentinel semantic ids used after remapping. Known classes occupy
/// [0, K); both sentinels still fit the 16-bit semantic field of a label word.
inline constexpr std::uint32_t kUnknownLabel = 0xFFFE;
inline constexpr std::uint32_t kIgnoreLabel = 0xFFFF;

struct Point {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double intensity = 0.0;
};

struct PointLabel {
  std::uint32_t semantic_id = 0;
  std::uint32_t instance_id = 0;  // 0 = no instance

  friend bool operator==(const PointLabel&, const PointLabel&) = default;
};

enum class LabelSpace { kRaw, kRemapped };

struct Scene {
  std::string scene_id;
  std::vector<Point> points;
  std::vector<PointLabel> labels;
  LabelSpace label_space = LabelSpace::kRaw;
};

/// Which unknown set a remap collapses onto the UNKNOWN sentinel.
enum class LabelSplit { kTrain, kEval };

/// Class-id vocabulary. Known classes get contiguous indices: sorted stuff
/// ids first, then sorted thing ids.
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::set<std::uint32_t> stuff_ids, std::set<std::uint32_t> thing_ids,
             std::set<std::uint32_t> unknown_train_ids,
             std::set<std::uint32_t> unknown_eval_ids,
             std::map<std::uint32_t, std::string> names = {});

  /// The vocabulary matching the raw ids emitted by the synthetic generator.
  static Vocabulary synthetic_default();

  const std::set<std::uint32_t>& stuff_ids() const { return stuff_ids_; }
  const std::set<std::uint32_t>& thing_ids() const { return thing_ids_; }
  const std::set<std::uint32_t>& unknown_train_ids() const { return unknown_train_ids_; }
  const std::set<std::uint32_t>& unknown_eval_ids() const { return unknown_eval_ids_; }

  std::size_t known_count() const { return known_raw_.size(); }
  std::optional<std::uint32_t> known_index(std::uint32_t raw_id) const;
  std::uint32_t raw_id(std::uint32_t known_index) const { return known_raw_.at(known_index); }
  bool is_thing(std::uint32_t known_index) const;
  bool is_stuff(std::uint32_t known_index) const;
  std::string class_name(std::uint32_t known_index) const;

 private:
  std::set<std::uint32_t> stuff_ids_;
  std::set<std::uint32_t> thing_ids_;
  std::set<std::uint32_t> unknown_train_ids_;
  std::set<std::uint32_t> unknown_eval_ids_;
  std::map<std::uint32_t, std::string> names_;
  std::vector<std::uint32_t> known_raw_;
};

// SemanticKITTI container.
std::vector<Point> read_kitti_points(const std::filesystem::path& bin_path);
std::vector<PointLabel> read_kitti_labels(const std::filesystem::path& label_path);
Scene read_kitti_scene(const std::filesystem::path& bin_path,
                       const std::filesystem::path& label_path);
void write_kitti_points(const std::vector<Point>& points, const std::filesystem::path& bin_path);
void write_kitti_labels(const std::vector<PointLabel>& labels,
                        const std::filesystem::path& label_path);
void write_kitti_scene(const Scene& scene, const std::filesystem::path& bin_path,
                       const std::filesystem::path& label_path);

std::uint32_t encode_label_word(const PointLabel& label);
PointLabel decode_label_word(std::uint32_t word);

/// Collapses raw ids onto [0, K) / UNKNOWN / IGNORE. Scenes that are already
/// remapped are returned unchanged.
Scene remap_labels(const Scene& scene, const Vocabulary& vocab,
                   LabelSplit split = LabelSplit::kTrain);

template <typename T>
struct Range {
  T min{};
  T max{};
};

/// Parameters of the synthetic scene generator. Densities are points per m^2
/// of sampled surface.
struct SceneSpec {
  // Ground annulus; road inside road_radius_m, terrain outside.
  double ground_r_min_m = 1.0;
  double ground_r_max_m = 20.5;
  double ground_z_m = -1.7;
  double road_radius_m = 10.0;
  double ground_density = 3.0;

  Range<int> walls{2, 4};
  Range<double> wall_radius_m{14.5, 19.0};
  Range<double> wall_length_m{5.0, 10.0};
  Range<double> wall_height_m{2.0, 3.0};
  double wall_density = 12.0;

  Range<int> boxes{2, 3};
  Range<double> box_length_m{2.6, 3.4};
  Range<double> box_width_m{1.5, 1.8};
  Range<double> box_height_m{1.2, 1.6};
  double box_density = 30.0;

  Range<int> spheres{1, 2};
  Range<double> sphere_radius_m{0.5, 0.8};
  double sphere_density = 30.0;

  Range<int> cylinders{0, 1};
  Range<double> cylinder_radius_m{0.3, 0.5};
  Range<double> cylinder_height_m{1.2, 2.0};
  double cylinder_density = 30.0;

  // Object footprints are placed in this range annulus with a minimum gap.
  Range<double> object_radius_m{4.0, 12.0};
  double object_gap_m = 2.0;

  int outliers = 20;
  double noise_sigma_m = 0.02;
  double intensity_sigma = 0.05;

  void validate() const;
};

/// Raw semantic ids written by the synthetic generator.
namespace synthetic_ids {
inline constexpr std::uint32_t kUnlabeled = 0;
inline constexpr std::uint32_t kCar = 10;
inline constexpr std::uint32_t kCylinder = 11;
inline constexpr std::uint32_t kSphere = 15;
inline constexpr std::uint32_t kRoad = 40;
inline constexpr std::uint32_t kBuilding = 50;
inline constexpr std::uint32_t kTerrain = 72;
}  // namespace synthetic_ids

/// Deterministic in (seed, spec). Labels are raw ids from synthetic_ids.
Scene generate_synthetic_scene(std::uint64_t seed, const SceneSpec& spec);

}  // namespace evipan
