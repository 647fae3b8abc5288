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

#include "evipan/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <type_traits>

#include "evipan/errors.hpp"

namespace evipan {

namespace {

using json = nlohmann::json;

enum class Kind { kInt, kUInt, kReal, kBool, kString, kIntList };

struct Entry {
  std::string key;
  Kind kind;
  std::function<void(const json&)> set;
  std::function<json()> get;
};

[[noreturn]] void bad_value(const std::string& key, const std::string& why) {
  throw ConfigError("configuration key '" + key + "': " + why);
}

template <typename T>
T integer_value(const std::string& key, const json& j) {
  if (j.is_number_unsigned()) {
    const auto v = j.get<std::uint64_t>();
    if (v > static_cast<std::uint64_t>(std::numeric_limits<T>::max())) {
      bad_value(key, "value out of range");
    }
    return static_cast<T>(v);
  }
  if (j.is_number_integer()) {
    const auto v = j.get<std::int64_t>();
    if constexpr (std::is_unsigned_v<T>) {
      if (v < 0) {
        bad_value(key, "expected a non-negative integer");
      }
      if (static_cast<std::uint64_t>(v) > std::numeric_limits<T>::max()) {
        bad_value(key, "value out of range");
      }
    } else {
      if (v < std::numeric_limits<T>::min() || v > std::numeric_limits<T>::max()) {
        bad_value(key, "value out of range");
      }
    }
    return static_cast<T>(v);
  }
  bad_value(key, "expected an integer");
}

template <typename T>
Entry bind_key(std::string key, T& field) {
  Entry e;
  e.key = key;
  if constexpr (std::is_same_v<T, bool>) {
    e.kind = Kind::kBool;
    e.set = [key, &field](const json& j) {
      if (!j.is_boolean()) {
        bad_value(key, "expected true or false");
      }
      field = j.get<bool>();
    };
  } else if constexpr (std::is_integral_v<T>) {
    e.kind = std::is_unsigned_v<T> ? Kind::kUInt : Kind::kInt;
    e.set = [key, &field](const json& j) { field = integer_value<T>(key, j); };
  } else if constexpr (std::is_floating_point_v<T>) {
    e.kind = Kind::kReal;
    e.set = [key, &field](const json& j) {
      if (!j.is_number()) {
        bad_value(key, "expected a number");
      }
      field = j.get<double>();
    };
  } else if constexpr (std::is_same_v<T, std::string>) {
    e.kind = Kind::kString;
    e.set = [key, &field](const json& j) {
      if (!j.is_string()) {
        bad_value(key, "expected a string");
      }
      field = j.get<std::string>();
    };
  } else {
    using V = typename T::value_type;
    e.kind = Kind::kIntList;
    e.set = [key, &field](const json& j) {
      if (!j.is_array()) {
        bad_value(key, "expected a list of integers");
      }
      T out;
      for (const auto& x : j) {
        out.push_back(integer_value<V>(key, x));
      }
      field = std::move(out);
    };
  }
  e.get = [&field] { return json(field); };
  return e;
}

Entry bind_choice(std::string key, std::string& field, std::vector<std::string> options) {
  Entry e = bind_key(key, field);
  e.set = [key, &field, options](const json& j) {
    if (!j.is_string() ||
        std::find(options.begin(), options.end(), j.get<std::string>()) == options.end()) {
      std::string list;
      for (const auto& o : options) {
        list += (list.empty() ? "" : ", ") + o;
      }
      bad_value(key, "expected one of: " + list);
    }
    field = j.get<std::string>();
  };
  return e;
}

template <typename T>
void bind_range(std::vector<Entry>& out, const std::string& key, Range<T>& r) {
  out.push_back(bind_key(key + ".min", r.min));
  out.push_back(bind_key(key + ".max", r.max));
}

std::vector<Entry> registry(RunConfig& c) {
  std::vector<Entry> e;
  e.push_back(bind_key("seed", c.seed));

  SceneSpec& s = c.scene;
  e.push_back(bind_key("scene.ground_r_min_m", s.ground_r_min_m));
  e.push_back(bind_key("scene.ground_r_max_m", s.ground_r_max_m));
  e.push_back(bind_key("scene.ground_z_m", s.ground_z_m));
  e.push_back(bind_key("scene.road_radius_m", s.road_radius_m));
  e.push_back(bind_key("scene.ground_density", s.ground_density));
  bind_range(e, "scene.walls", s.walls);
  bind_range(e, "scene.wall_radius_m", s.wall_radius_m);
  bind_range(e, "scene.wall_length_m", s.wall_length_m);
  bind_range(e, "scene.wall_height_m", s.wall_height_m);
  e.push_back(bind_key("scene.wall_density", s.wall_density));
  bind_range(e, "scene.boxes", s.boxes);
  bind_range(e, "scene.box_length_m", s.box_length_m);
  bind_range(e, "scene.box_width_m", s.box_width_m);
  bind_range(e, "scene.box_height_m", s.box_height_m);
  e.push_back(bind_key("scene.box_density", s.box_density));
  bind_range(e, "scene.spheres", s.spheres);
  bind_range(e, "scene.sphere_radius_m", s.sphere_radius_m);
  e.push_back(bind_key("scene.sphere_density", s.sphere_density));
  bind_range(e, "scene.cylinders", s.cylinders);
  bind_range(e, "scene.cylinder_radius_m", s.cylinder_radius_m);
  bind_range(e, "scene.cylinder_height_m", s.cylinder_height_m);
  e.push_back(bind_key("scene.cylinder_density", s.cylinder_density));
  bind_range(e, "scene.object_radius_m", s.object_radius_m);
  e.push_back(bind_key("scene.object_gap_m", s.object_gap_m));
  e.push_back(bind_key("scene.outliers", s.outliers));
  e.push_back(bind_key("scene.noise_sigma_m", s.noise_sigma_m));
  e.push_back(bind_key("scene.intensity_sigma", s.intensity_sigma));

  e.push_back(bind_key("vocab.stuff", c.vocab_stuff));
  e.push_back(bind_key("vocab.things", c.vocab_things));
  e.push_back(bind_key("vocab.unknown_train", c.vocab_unknown_train));
  e.push_back(bind_key("vocab.unknown_eval", c.vocab_unknown_eval));

  e.push_back(bind_key("grid.h", c.grid.h));
  e.push_back(bind_key("grid.w", c.grid.w));
  e.push_back(bind_key("grid.z", c.grid.z));
  e.push_back(bind_key("grid.r_min_m", c.grid.r_min));
  e.push_back(bind_key("grid.r_max_m", c.grid.r_max));
  e.push_back(bind_key("grid.z_min_m", c.grid.z_min));
  e.push_back(bind_key("grid.z_max_m", c.grid.z_max));
  e.push_back(bind_key("heatmap.sigma_voxels", c.heatmap_sigma));

  ObjectiveConfig& o = c.train.objective;
  e.push_back(bind_key("loss.delta_margin", o.delta_margin));
  e.push_back(bind_key("loss.pairs_per_batch", c.train.pairs_per_batch));
  e.push_back(bind_key("loss.warmup_epochs", c.train.warmup_epochs));
  e.push_back(bind_key("loss.sigma_floor", o.sigma_floor));
  e.push_back(bind_key("loss.w_seg", o.weights.seg));
  e.push_back(bind_key("loss.w_center", o.weights.center));
  e.push_back(bind_key("loss.w_uniform", o.weights.uniform));
  e.push_back(bind_key("loss.w_adaptive", o.weights.adaptive));
  e.push_back(bind_key("loss.w_contrastive", o.weights.contrastive));
  e.push_back(bind_key("loss.w_embed", o.weights.embed));

  e.push_back(bind_key("embed.dim", c.train.embed_dim));
  e.push_back(bind_key("embed.push_margin", o.push_margin));
  e.push_back(bind_key("embed.var_reg_weight", o.var_reg_weight));
  e.push_back(bind_key("embed.include_unknown_instances", c.include_unknown_instances));
  e.push_back(bind_key("embed.lambda_pull", o.embed_weights.pull));
  e.push_back(bind_key("embed.lambda_push", o.embed_weights.push));
  e.push_back(bind_key("embed.lambda_proto", o.embed_weights.proto));

  e.push_back(bind_key("train.epochs", c.train.epochs));
  e.push_back(bind_key("train.batch_scenes", c.train.batch_scenes));
  e.push_back(bind_key("train.learning_rate", c.train.learning_rate));
  e.push_back(bind_key("train.lr_decay_epochs", c.train.lr_decay_epochs));
  e.push_back(bind_key("train.lr_decay_factor", c.train.lr_decay_factor));
  e.push_back(bind_choice("train.mode", c.train_mode, {"dirichlet", "softmax"}));

  InferenceConfig& i = c.infer;
  e.push_back(bind_key("infer.t", i.threshold.t));
  e.push_back(bind_key("infer.u_floor", i.threshold.u_floor));
  e.push_back(bind_key("infer.center_min_score", i.center_min_score));
  e.push_back(bind_key("infer.center_top_k", i.center_top_k));
  e.push_back(bind_key("infer.center_merge_dist_sq", i.center_merge_dist_sq));
  e.push_back(bind_key("infer.dbscan_eps", i.dbscan_eps));
  e.push_back(bind_key("infer.dbscan_min_pts", i.dbscan_min_pts));
  e.push_back(bind_key("infer.dbscan_use_xyz", i.dbscan_use_xyz));
  e.push_back(bind_choice("infer.fallback", c.infer_fallback, {"per_class", "unsegmented"}));
  e.push_back(bind_choice("infer.format", c.infer_format, {"text", "binary"}));

  e.push_back(bind_choice("eval.level", c.eval_level, {"voxel", "point"}));

  e.push_back(bind_key("synth.train", c.synth_train));
  e.push_back(bind_key("synth.eval", c.synth_eval));

  e.push_back(bind_key("paths.data", c.data_dir));
  e.push_back(bind_key("paths.voxels", c.voxels_dir));
  e.push_back(bind_key("paths.checkpoint", c.checkpoint));
  e.push_back(bind_key("paths.predictions", c.predictions_dir));
  e.push_back(bind_key("paths.report", c.report));
  e.push_back(bind_key("paths.train_log", c.train_log));
  e.push_back(bind_key("paths.ablation", c.ablation_report));

  e.push_back(bind_key("gradcheck.cases", c.gradcheck.cases));
  e.push_back(bind_key("gradcheck.tolerance", c.gradcheck.tolerance));
  e.push_back(bind_key("gradcheck.corrupt", c.gradcheck.corrupt));

  e.push_back(bind_key("run.parallel", c.parallel));
  return e;
}

Entry& find_entry(std::vector<Entry>& reg, const std::string& key) {
  auto it = std::find_if(reg.begin(), reg.end(), [&](const Entry& e) { return e.key == key; });
  if (it == reg.end()) {
    throw ConfigError("unknown configuration key '" + key + "'");
  }
  return *it;
}

json parse_text(const Entry& e, const std::string& text) {
  auto parse_int = [&](const std::string& t) -> json {
    if (e.kind == Kind::kUInt || (e.kind == Kind::kIntList && !t.empty() && t[0] != '-')) {
      std::uint64_t v = 0;
      auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
      if (ec != std::errc() || p != t.data() + t.size()) {
        bad_value(e.key, "expected a non-negative integer, got '" + t + "'");
      }
      return v;
    }
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || p != t.data() + t.size()) {
      bad_value(e.key, "expected an integer, got '" + t + "'");
    }
    return v;
  };
  switch (e.kind) {
    case Kind::kString:
      return text;
    case Kind::kBool:
      if (text == "true" || text == "1" || text == "yes" || text == "on") {
        return true;
      }
      if (text == "false" || text == "0" || text == "no" || text == "off") {
        return false;
      }
      bad_value(e.key, "expected true or false, got '" + text + "'");
    case Kind::kInt:
    case Kind::kUInt:
      return parse_int(text);
    case Kind::kReal: {
      char* end = nullptr;
      const double v = std::strtod(text.c_str(), &end);
      if (text.empty() || end != text.c_str() + text.size()) {
        bad_value(e.key, "expected a number, got '" + text + "'");
      }
      return v;
    }
    case Kind::kIntList: {
      std::string t = text;
      if (!t.empty() && t.front() == '[' && t.back() == ']') {
        t = t.substr(1, t.size() - 2);
      }
      json out = json::array();
      std::size_t start = 0;
      while (start < t.size()) {
        std::size_t end = t.find(',', start);
        if (end == std::string::npos) {
          end = t.size();
        }
        std::string item = t.substr(start, end - start);
        item.erase(0, item.find_first_not_of(' '));
        item.erase(item.find_last_not_of(' ') + 1);
        out.push_back(parse_int(item));
        start = end + 1;
      }
      return out;
    }
  }
  bad_value(e.key, "unsupported value");
}

void merge_into(std::vector<Entry>& reg, const json& j, const std::string& prefix) {
  for (const auto& [k, v] : j.items()) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    if (v.is_object()) {
      merge_into(reg, v, key);
    } else {
      find_entry(reg, key).set(v);
    }
  }
}

std::set<std::uint32_t> to_set(const std::vector<std::uint32_t>& v) { return {v.begin(), v.end()}; }

}  // namespace

void RunConfig::set(const std::string& key, const std::string& text) {
  auto reg = registry(*this);
  Entry& e = find_entry(reg, key);
  e.set(parse_text(e, text));
}

void RunConfig::merge(const nlohmann::json& j) {
  if (!j.is_object()) {
    throw ConfigError("configuration must be a JSON object");
  }
  auto reg = registry(*this);
  merge_into(reg, j, "");
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open configuration file " + path.string());
  }
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("configuration file " + path.string() + ": " + e.what());
  }
  merge(j);
}

nlohmann::json RunConfig::to_json() const {
  auto reg = registry(const_cast<RunConfig&>(*this));
  json out = json::object();
  for (const auto& e : reg) {
    std::string ptr = "/" + e.key;
    std::replace(ptr.begin(), ptr.end(), '.', '/');
    out[json::json_pointer(ptr)] = e.get();
  }
  return out;
}

std::vector<std::string> RunConfig::keys() {
  RunConfig c;
  std::vector<std::string> out;
  for (const auto& e : registry(c)) {
    out.push_back(e.key);
  }
  return out;
}

void RunConfig::finalize() {
  train.seed = seed;
  train.mode = train_mode == "softmax" ? SemanticMode::kSoftmax : SemanticMode::kDirichlet;
  infer.fallback =
      infer_fallback == "unsegmented" ? FallbackMode::kUnsegmented : FallbackMode::kPerClass;
  infer.heatmap_sigma = heatmap_sigma;
  gradcheck.seed = seed;

  scene.validate();
  grid.validate();
  train.validate();
  infer.validate();
  if (!(heatmap_sigma > 0.0)) {
    throw ConfigError("configuration key 'heatmap.sigma_voxels': must be positive");
  }
  if (gradcheck.cases == 0) {
    throw ConfigError("configuration key 'gradcheck.cases': must be positive");
  }
  if (!(gradcheck.tolerance > 0.0)) {
    throw ConfigError("configuration key 'gradcheck.tolerance': must be positive");
  }
  if (!gradcheck.corrupt.empty()) {
    const auto& names = gradient_check_names();
    if (std::find(names.begin(), names.end(), gradcheck.corrupt) == names.end()) {
      throw ConfigError("configuration key 'gradcheck.corrupt': no check named '" +
                        gradcheck.corrupt + "'");
    }
  }
  for (const auto* ids : {&vocab_stuff, &vocab_things, &vocab_unknown_train, &vocab_unknown_eval}) {
    for (std::uint32_t id : *ids) {
      if (id >= kUnknownLabel) {
        throw ConfigError("vocabulary id " + std::to_string(id) + " collides with a sentinel");
      }
    }
  }
  if (vocab_stuff.empty() && vocab_things.empty()) {
    throw ConfigError("vocabulary has no known classes");
  }
  (void)vocabulary();
}

Vocabulary RunConfig::vocabulary() const {
  using namespace synthetic_ids;
  return Vocabulary(to_set(vocab_stuff), to_set(vocab_things), to_set(vocab_unknown_train),
                    to_set(vocab_unknown_eval),
                    {{kRoad, "road"},
                     {kBuilding, "building"},
                     {kTerrain, "terrain"},
                     {kCar, "car"},
                     {kSphere, "sphere"},
                     {kCylinder, "cylinder"}});
}

}  // namespace evipan
