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

// The `evipan` subcommands. Each takes a finalized RunConfig, writes its
// artifacts, prints a short summary and returns a process exit code.
//
// Dataset layout written by `synth` and read by the other commands:
//
//   <paths.data>/manifest.json
//   <paths.data>/train/NNNNNN.bin, NNNNNN.label
//   <paths.data>/eval/NNNNNN.bin, NNNNNN.label

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "evipan/config.hpp"
#include "evipan/inference.hpp"
#include "evipan/metrics.hpp"

namespace evipan {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitCheckFailed = 3;

struct ManifestScene {
  std::string id;
  std::uint64_t seed = 0;
  std::string points;  // relative to the dataset directory
  std::string labels;
};

struct Manifest {
  std::uint64_t seed = 0;
  std::vector<ManifestScene> train;
  std::vector<ManifestScene> eval;
};

/// Throws IoError when the manifest is missing, FormatError when malformed.
Manifest read_manifest(const std::filesystem::path& data_dir);

/// Seed of scene `index` of a split (0 train, 1 eval), derived with
/// SplitMix64 so neighboring seeds give unrelated scenes.
std::uint64_t scene_seed(std::uint64_t seed, int split, std::uint64_t index);

/// Area under the ROC curve for scoring positives above negatives, from the
/// Mann-Whitney rank statistic with midranks for ties. NaN when either side
/// is empty.
double auroc(std::span<const double> positive, std::span<const double> negative);

/// Known vs unknown voxel uncertainty from a prediction, with the ground
/// truth taken from a remapped grid (UNKNOWN rows are positives, known-class
/// rows negatives, IGNORE rows skipped).
struct UncertaintySeparation {
  double mu_known = 0.0;
  double mu_unknown = 0.0;
  double delta_u = 0.0;
  double auroc = 0.0;
  std::size_t known = 0;
  std::size_t unknown = 0;

  nlohmann::json to_json() const;
};

/// Collects per-voxel uncertainties over several scenes.
class SeparationAccumulator {
 public:
  explicit SeparationAccumulator(std::size_t num_classes) : num_classes_(num_classes) {}
  void add(const PanopticPrediction& pred, const VoxelGrid& gt);
  UncertaintySeparation result() const;

 private:
  std::size_t num_classes_;
  std::vector<double> known_, unknown_;
};

int cmd_synth(const RunConfig& cfg, std::ostream& out);
int cmd_voxelize(const RunConfig& cfg, std::ostream& out);
int cmd_train(const RunConfig& cfg, std::ostream& out);
int cmd_infer(const RunConfig& cfg, std::ostream& out);
int cmd_eval(const RunConfig& cfg, std::ostream& out);
int cmd_gradcheck(const RunConfig& cfg, std::ostream& out);
int cmd_ablate(const RunConfig& cfg, std::ostream& out);

/// Full command-line entry point: parses arguments, merges configuration,
/// dispatches and maps errors onto exit codes.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace evipan
