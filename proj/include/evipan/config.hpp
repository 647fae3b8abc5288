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

// Run configuration: built-in defaults, overridden by a JSON file, overridden
// by dotted command-line keys. Every key is listed by RunConfig::keys().

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "evipan/gradcheck.hpp"
#include "evipan/inference.hpp"
#include "evipan/pointcloud_io.hpp"
#include "evipan/polar_grid.hpp"
#include "evipan/toy_head.hpp"

namespace evipan {

struct RunConfig {
  std::uint64_t seed = 0;

  SceneSpec scene;
  std::vector<std::uint32_t> vocab_stuff{40, 50, 72};
  std::vector<std::uint32_t> vocab_things{10};
  std::vector<std::uint32_t> vocab_unknown_train{11, 15};
  std::vector<std::uint32_t> vocab_unknown_eval{11, 15};

  GridSpec grid;
  double heatmap_sigma = 2.0;

  TrainConfig train;
  std::string train_mode = "dirichlet";  // dirichlet | softmax
  bool include_unknown_instances = true;

  InferenceConfig infer;
  std::string infer_fallback = "per_class";  // per_class | unsegmented
  std::string infer_format = "text";         // text | binary

  std::string eval_level = "voxel";  // voxel | point

  std::uint64_t synth_train = 50;
  std::uint64_t synth_eval = 10;

  std::string data_dir = "data";
  std::string voxels_dir = "run/voxels";
  std::string checkpoint = "run/model.ckpt";
  std::string predictions_dir = "run/predictions";
  std::string report = "run/report.json";
  std::string train_log = "run/train_log.jsonl";
  std::string ablation_report = "run/ablation.json";

  GradCheckConfig gradcheck;
  bool parallel = false;

  /// Sets one dotted key from its command-line text. Throws ConfigError for
  /// unknown keys and malformed values.
  void set(const std::string& key, const std::string& text);
  /// Merges a JSON object; nested objects and dotted names are both accepted.
  void merge(const nlohmann::json& j);
  void merge_file(const std::filesystem::path& path);

  /// Nested JSON of every key (round-trips through merge).
  nlohmann::json to_json() const;
  static std::vector<std::string> keys();

  /// Validates every section and propagates shared settings (seed, grid,
  /// modes) into the module configs. Throws ConfigError / SpecError.
  void finalize();

  Vocabulary vocabulary() const;
};

}  // namespace evipan
