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

#include "evipan/pointcloud_io.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "byte_io.hpp"
#include "evipan/errors.hpp"

namespace evipan {

namespace {

constexpr std::size_t kPointRecordBytes = 16;
constexpr std::size_t kLabelRecordBytes = 4;

}  // namespace

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary(std::set<std::uint32_t> stuff_ids, std::set<std::uint32_t> thing_ids,
                       std::set<std::uint32_t> unknown_train_ids,
                       std::set<std::uint32_t> unknown_eval_ids,
                       std::map<std::uint32_t, std::string> names)
    : stuff_ids_(std::move(stuff_ids)),
      thing_ids_(std::move(thing_ids)),
      unknown_train_ids_(std::move(unknown_train_ids)),
      unknown_eval_ids_(std::move(unknown_eval_ids)),
      names_(std::move(names)) {
  auto disjoint = [](const std::set<std::uint32_t>& a, const std::set<std::uint32_t>& b) {
    return std::none_of(a.begin(), a.end(), [&](std::uint32_t id) { return b.count(id) > 0; });
  };
  if (!disjoint(stuff_ids_, thing_ids_) || !disjoint(stuff_ids_, unknown_train_ids_) ||
      !disjoint(thing_ids_, unknown_train_ids_)) {
    throw SpecError("vocabulary: stuff, thing and training-unknown id sets must be disjoint");
  }
  if (!disjoint(stuff_ids_, unknown_eval_ids_) || !disjoint(thing_ids_, unknown_eval_ids_)) {
    throw SpecError("vocabulary: evaluation-unknown ids must not be known classes");
  }
  for (std::uint32_t id : stuff_ids_) {
    known_raw_.push_back(id);
  }
  for (std::uint32_t id : thing_ids_) {
    known_raw_.push_back(id);
  }
  if (known_raw_.size() >= kUnknownLabel) {
    throw SpecError("vocabulary: too many known classes");
  }
}

Vocabulary Vocabulary::synthetic_default() {
  using namespace synthetic_ids;
  return Vocabulary({kRoad, kBuilding, kTerrain}, {kCar}, {kSphere, kCylinder},
                    {kSphere, kCylinder},
                    {{kRoad, "road"},
                     {kBuilding, "building"},
                     {kTerrain, "terrain"},
                     {kCar, "car"},
                     {kSphere, "sphere"},
                     {kCylinder, "cylinder"}});
}

std::optional<std::uint32_t> Vocabulary::known_index(std::uint32_t raw_id) const {
  auto it = std::find(known_raw_.begin(), known_raw_.end(), raw_id);
  if (it == known_raw_.end()) {
    return std::nullopt;
  }
  return static_cast<std::uint32_t>(it - known_raw_.begin());
}

bool Vocabulary::is_thing(std::uint32_t known_index) const {
  return known_index < known_raw_.size() && thing_ids_.count(known_raw_[known_index]) > 0;
}

bool Vocabulary::is_stuff(std::uint32_t known_index) const {
  return known_index < known_raw_.size() && stuff_ids_.count(known_raw_[known_index]) > 0;
}

std::string Vocabulary::class_name(std::uint32_t known_index) const {
  std::uint32_t raw = raw_id(known_index);
  auto it = names_.find(raw);
  return it != names_.end() ? it->second : "class_" + std::to_string(raw);
}

// ---------------------------------------------------------------------------
// SemanticKITTI I/O

std::uint32_t encode_label_word(const PointLabel& label) {
  return (label.semantic_id & 0xFFFFu) | ((label.instance_id & 0xFFFFu) << 16);
}

PointLabel decode_label_word(std::uint32_t word) {
  return PointLabel{word & 0xFFFFu, word >> 16};
}

std::vector<Point> read_kitti_points(const std::filesystem::path& bin_path) {
  const auto bytes = detail::read_file_bytes(bin_path);
  if (bytes.size() % kPointRecordBytes != 0) {
    throw IoError("truncated point file (size not a multiple of 16): " + bin_path.string());
  }
  std::vector<Point> points(bytes.size() / kPointRecordBytes);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const unsigned char* rec = bytes.data() + i * kPointRecordBytes;
    Point& p = points[i];
    p.x = detail::get_f32(rec);
    p.y = detail::get_f32(rec + 4);
    p.z = detail::get_f32(rec + 8);
    p.intensity = detail::get_f32(rec + 12);
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z) ||
        !std::isfinite(p.intensity)) {
      throw FormatError("non-finite point " + std::to_string(i) + " in " + bin_path.string());
    }
  }
  return points;
}

std::vector<PointLabel> read_kitti_labels(const std::filesystem::path& label_path) {
  const auto bytes = detail::read_file_bytes(label_path);
  if (bytes.size() % kLabelRecordBytes != 0) {
    throw IoError("truncated label file (size not a multiple of 4): " + label_path.string());
  }
  std::vector<PointLabel> labels(bytes.size() / kLabelRecordBytes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i] = decode_label_word(detail::get_le<std::uint32_t>(bytes.data() + i * 4));
  }
  return labels;
}

Scene read_kitti_scene(const std::filesystem::path& bin_path,
                       const std::filesystem::path& label_path) {
  Scene scene;
  scene.scene_id = bin_path.stem().string();
  scene.points = read_kitti_points(bin_path);
  scene.labels = read_kitti_labels(label_path);
  if (scene.points.size() != scene.labels.size()) {
    throw FormatError("point/label count mismatch: " + std::to_string(scene.points.size()) +
                      " points vs " + std::to_string(scene.labels.size()) + " labels");
  }
  return scene;
}

void write_kitti_points(const std::vector<Point>& points, const std::filesystem::path& bin_path) {
  std::vector<unsigned char> bytes;
  bytes.reserve(points.size() * kPointRecordBytes);
  for (const Point& p : points) {
    detail::put_f32(bytes, static_cast<float>(p.x));
    detail::put_f32(bytes, static_cast<float>(p.y));
    detail::put_f32(bytes, static_cast<float>(p.z));
    detail::put_f32(bytes, static_cast<float>(p.intensity));
  }
  detail::write_file_bytes(bin_path, bytes);
}

void write_kitti_labels(const std::vector<PointLabel>& labels,
                        const std::filesystem::path& label_path) {
  std::vector<unsigned char> bytes;
  bytes.reserve(labels.size() * kLabelRecordBytes);
  for (const PointLabel& l : labels) {
    detail::put_le(bytes, encode_label_word(l));
  }
  detail::write_file_bytes(label_path, bytes);
}

void write_kitti_scene(const Scene& scene, const std::filesystem::path& bin_path,
                       const std::filesystem::path& label_path) {
  if (scene.points.size() != scene.labels.size()) {
    throw FormatError("scene has mismatched point and label counts");
  }
  write_kitti_points(scene.points, bin_path);
  write_kitti_labels(scene.labels, label_path);
}

Scene remap_labels(const Scene& scene, const Vocabulary& vocab, LabelSplit split) {
  if (scene.label_space == LabelSpace::kRemapped) {
    return scene;
  }
  const auto& unknown =
      split == LabelSplit::kTrain ? vocab.unknown_train_ids() : vocab.unknown_eval_ids();
  Scene out = scene;
  out.label_space = LabelSpace::kRemapped;
  for (PointLabel& label : out.labels) {
    if (auto idx = vocab.known_index(label.semantic_id)) {
      label.semantic_id = *idx;
    } else if (unknown.count(label.semantic_id) > 0) {
      label.semantic_id = kUnknownLabel;
    } else {
      label.semantic_id = kIgnoreLabel;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic scenes

void SceneSpec::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw SpecError(std::string("scene spec: ") + name + " must be positive");
    }
  };
  auto range = [](auto r, const char* name, bool allow_zero) {
    if (!(r.min <= r.max) || (allow_zero ? r.min < 0 : !(r.min > 0))) {
      throw SpecError(std::string("scene spec: degenerate range ") + name);
    }
  };
  positive(ground_density, "ground_density");
  positive(wall_density, "wall_density");
  positive(box_density, "box_density");
  positive(sphere_density, "sphere_density");
  positive(cylinder_density, "cylinder_density");
  if (!(ground_r_min_m >= 0.0 && ground_r_min_m < ground_r_max_m)) {
    throw SpecError("scene spec: degenerate ground annulus");
  }
  range(walls, "walls", true);
  range(boxes, "boxes", true);
  range(spheres, "spheres", true);
  range(cylinders, "cylinders", true);
  range(wall_radius_m, "wall_radius_m", false);
  range(wall_length_m, "wall_length_m", false);
  range(wall_height_m, "wall_height_m", false);
  range(box_length_m, "box_length_m", false);
  range(box_width_m, "box_width_m", false);
  range(box_height_m, "box_height_m", false);
  range(sphere_radius_m, "sphere_radius_m", false);
  range(cylinder_radius_m, "cylinder_radius_m", false);
  range(cylinder_height_m, "cylinder_height_m", false);
  range(object_radius_m, "object_radius_m", false);
  if (object_gap_m < 0.0 || noise_sigma_m < 0.0 || intensity_sigma < 0.0 || outliers < 0) {
    throw SpecError("scene spec: gap, noise and outlier count must be nonnegative");
  }
}

namespace {

struct Footprint {
  double x, y, radius;
};

class SceneBuilder {
 public:
  SceneBuilder(std::uint64_t seed, const SceneSpec& spec) : rng_(seed), spec_(spec) {}

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng_);
  }
  template <typename T>
  T pick(Range<T> r) {
    if constexpr (std::is_integral_v<T>) {
      return std::uniform_int_distribution<T>(r.min, r.max)(rng_);
    } else {
      return r.min == r.max ? r.min : uniform(r.min, r.max);
    }
  }
  double noise(double sigma) {
    return sigma > 0.0 ? std::normal_distribution<double>(0.0, sigma)(rng_) : 0.0;
  }
  std::size_t count_for_area(double area, double density) {
    return static_cast<std::size_t>(std::llround(area * density));
  }

  void add(double x, double y, double z, double mean_intensity, std::uint32_t sem,
           std::uint32_t inst) {
    // Rounded to float so in-memory scenes equal their on-disk encoding.
    auto f32 = [](double v) { return static_cast<double>(static_cast<float>(v)); };
    const double s = spec_.noise_sigma_m;
    Point p{f32(x + noise(s)), f32(y + noise(s)), f32(z + noise(s)),
            f32(std::clamp(mean_intensity + noise(spec_.intensity_sigma), 0.0, 1.0))};
    scene_.points.push_back(p);
    scene_.labels.push_back({sem, inst});
  }

  Footprint place(double radius) {
    for (int attempt = 0; attempt < 500; ++attempt) {
      const double r = uniform(spec_.object_radius_m.min, spec_.object_radius_m.max);
      const double th = uniform(-std::numbers::pi, std::numbers::pi);
      Footprint f{r * std::cos(th), r * std::sin(th), radius};
      bool clear = std::all_of(placed_.begin(), placed_.end(), [&](const Footprint& o) {
        return std::hypot(o.x - f.x, o.y - f.y) >= o.radius + f.radius + spec_.object_gap_m;
      });
      if (clear) {
        placed_.push_back(f);
        return f;
      }
    }
    throw SpecError("scene spec: cannot place objects without overlap; widen object_radius_m");
  }

  bool inside_footprint(double x, double y) const {
    return std::any_of(placed_.begin(), placed_.end(), [&](const Footprint& f) {
      return std::hypot(x - f.x, y - f.y) < f.radius;
    });
  }

  std::mt19937_64 rng_;
  const SceneSpec& spec_;
  Scene scene_;
  std::vector<Footprint> placed_;
};

constexpr double kRoadIntensity = 0.15;
constexpr double kTerrainIntensity = 0.4;
constexpr double kBuildingIntensity = 0.6;
constexpr double kCarIntensity = 0.85;
constexpr double kSphereIntensity = 0.3;
constexpr double kCylinderIntensity = 0.7;

}  // namespace

Scene generate_synthetic_scene(std::uint64_t seed, const SceneSpec& spec) {
  spec.validate();
  using namespace synthetic_ids;
  SceneBuilder b(seed, spec);
  b.scene_.scene_id = "synthetic_" + std::to_string(seed);
  constexpr double kPi = std::numbers::pi;
  const double ground = spec.ground_z_m;

  // Draw object layouts first so ground points under footprints can be
  // removed.
  struct Box {
    Footprint f;
    double yaw, length, width, height;
  };
  struct Round {
    Footprint f;
    double radius, height;
  };
  std::vector<Box> boxes(static_cast<std::size_t>(b.pick(spec.boxes)));
  for (Box& box : boxes) {
    box.length = b.pick(spec.box_length_m);
    box.width = b.pick(spec.box_width_m);
    box.height = b.pick(spec.box_height_m);
    box.yaw = b.uniform(-kPi, kPi);
    box.f = b.place(0.5 * std::hypot(box.length, box.width));
  }
  std::vector<Round> spheres(static_cast<std::size_t>(b.pick(spec.spheres)));
  for (Round& s : spheres) {
    s.radius = b.pick(spec.sphere_radius_m);
    s.height = 2.0 * s.radius;
    s.f = b.place(s.radius);
  }
  std::vector<Round> cylinders(static_cast<std::size_t>(b.pick(spec.cylinders)));
  for (Round& c : cylinders) {
    c.radius = b.pick(spec.cylinder_radius_m);
    c.height = b.pick(spec.cylinder_height_m);
    c.f = b.place(c.radius);
  }

  // Ground, uniform over the annulus area.
  {
    const double r0 = spec.ground_r_min_m, r1 = spec.ground_r_max_m;
    const std::size_t n = b.count_for_area(kPi * (r1 * r1 - r0 * r0), spec.ground_density);
    for (std::size_t i = 0; i < n; ++i) {
      const double r = std::sqrt(b.uniform(r0 * r0, r1 * r1));
      const double th = b.uniform(-kPi, kPi);
      const double x = r * std::cos(th), y = r * std::sin(th);
      if (b.inside_footprint(x, y)) {
        continue;
      }
      const bool road = r < spec.road_radius_m;
      b.add(x, y, ground, road ? kRoadIntensity : kTerrainIntensity, road ? kRoad : kTerrain, 0);
    }
  }

  // Walls: vertical segments tangent to a circle around the sensor.
  const int wall_count = b.pick(spec.walls);
  for (int w = 0; w < wall_count; ++w) {
    const double rw = b.pick(spec.wall_radius_m);
    const double th = b.uniform(-kPi, kPi);
    const double len = b.pick(spec.wall_length_m);
    const double h = b.pick(spec.wall_height_m);
    const double cx = rw * std::cos(th), cy = rw * std::sin(th);
    const double tx = -std::sin(th), ty = std::cos(th);
    const std::size_t n = b.count_for_area(len * h, spec.wall_density);
    for (std::size_t i = 0; i < n; ++i) {
      const double s = b.uniform(-0.5 * len, 0.5 * len);
      const double z = b.uniform(ground, ground + h);
      b.add(cx + s * tx, cy + s * ty, z, kBuildingIntensity, kBuilding, 0);
    }
  }

  std::uint32_t next_instance = 1;

  // Boxes: top and four sides.
  for (const Box& box : boxes) {
    const std::uint32_t inst = next_instance++;
    const double c = std::cos(box.yaw), s = std::sin(box.yaw);
    auto emit = [&](double u, double v, double z) {
      b.add(box.f.x + u * c - v * s, box.f.y + u * s + v * c, z, kCarIntensity, kCar, inst);
    };
    const double hl = 0.5 * box.length, hw = 0.5 * box.width, top = ground + box.height;
    const std::size_t n_top = b.count_for_area(box.length * box.width, spec.box_density);
    for (std::size_t i = 0; i < n_top; ++i) {
      emit(b.uniform(-hl, hl), b.uniform(-hw, hw), top);
    }
    for (int side = 0; side < 4; ++side) {
      const bool along_length = side < 2;
      const double extent = along_length ? box.length : box.width;
      const double sign = (side % 2 == 0) ? 1.0 : -1.0;
      const std::size_t n = b.count_for_area(extent * box.height, spec.box_density);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = b.uniform(-0.5 * extent, 0.5 * extent);
        const double z = b.uniform(ground, top);
        if (along_length) {
          emit(t, sign * hw, z);
        } else {
          emit(sign * hl, t, z);
        }
      }
    }
  }

  // Spheres resting on the ground.
  for (const Round& sph : spheres) {
    const std::uint32_t inst = next_instance++;
    const double area = 4.0 * kPi * sph.radius * sph.radius;
    const std::size_t n = b.count_for_area(area, spec.sphere_density);
    for (std::size_t i = 0; i < n; ++i) {
      const double cz = b.uniform(-1.0, 1.0);
      const double phi = b.uniform(-kPi, kPi);
      const double ring = std::sqrt(1.0 - cz * cz);
      b.add(sph.f.x + sph.radius * ring * std::cos(phi), sph.f.y + sph.radius * ring * std::sin(phi),
            ground + sph.radius * (1.0 + cz), kSphereIntensity, kSphere, inst);
    }
  }

  // Upright cylinders: lateral surface plus cap.
  for (const Round& cyl : cylinders) {
    const std::uint32_t inst = next_instance++;
    const std::size_t n_side =
        b.count_for_area(2.0 * kPi * cyl.radius * cyl.height, spec.cylinder_density);
    for (std::size_t i = 0; i < n_side; ++i) {
      const double phi = b.uniform(-kPi, kPi);
      b.add(cyl.f.x + cyl.radius * std::cos(phi), cyl.f.y + cyl.radius * std::sin(phi),
            b.uniform(ground, ground + cyl.height), kCylinderIntensity, kCylinder, inst);
    }
    const std::size_t n_cap = b.count_for_area(kPi * cyl.radius * cyl.radius, spec.cylinder_density);
    for (std::size_t i = 0; i < n_cap; ++i) {
      const double rr = cyl.radius * std::sqrt(b.uniform(0.0, 1.0));
      const double phi = b.uniform(-kPi, kPi);
      b.add(cyl.f.x + rr * std::cos(phi), cyl.f.y + rr * std::sin(phi), ground + cyl.height,
            kCylinderIntensity, kCylinder, inst);
    }
  }

  // Unlabeled clutter.
  for (int i = 0; i < spec.outliers; ++i) {
    const double r = b.uniform(spec.ground_r_min_m, spec.ground_r_max_m);
    const double th = b.uniform(-kPi, kPi);
    b.add(r * std::cos(th), r * std::sin(th), b.uniform(ground, ground + 3.0), b.uniform(0.0, 1.0),
          kUnlabeled, 0);
  }

  return std::move(b.scene_);
}

}  // namespace evipan
