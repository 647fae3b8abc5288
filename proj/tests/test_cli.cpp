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

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "evipan/commands.hpp"
#include "evipan/errors.hpp"
#include "evipan/inference.hpp"
#include "evipan/toy_head.hpp"
#include "support.hpp"

using namespace evipan;
using evipan::test::ScratchDir;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "evipan");
  std::vector<char*> argv;
  for (auto& a : args) {
    argv.push_back(a.data());
  }
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

/// Paths of a small run rooted in a scratch directory.
std::vector<std::string> small(const ScratchDir& d, std::vector<std::string> extra = {}) {
  std::vector<std::string> a{"--paths.data",        (d / "data").string(),
                             "--paths.voxels",      (d / "vox").string(),
                             "--paths.checkpoint",  (d / "m.ckpt").string(),
                             "--paths.predictions", (d / "pred").string(),
                             "--paths.report",      (d / "report.json").string(),
                             "--paths.train_log",   (d / "log.jsonl").string(),
                             "--paths.ablation",    (d / "ablation.json").string(),
                             "--synth.train",       "2",
                             "--synth.eval",        "2",
                             "--epochs",            "2",
                             "--embed.dim",         "8"};
  a.insert(a.end(), extra.begin(), extra.end());
  return a;
}

std::vector<std::string> cmd(const std::string& name, std::vector<std::string> args) {
  args.insert(args.begin(), name);
  return args;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

/// Writes predictions that copy the ground truth of every eval scene.
void write_oracle_predictions(const ScratchDir& d) {
  RunConfig cfg;
  cfg.finalize();
  const Vocabulary vocab = cfg.vocabulary();
  const Manifest m = read_manifest(d / "data");
  fs::create_directories(d / "pred");
  for (const auto& e : m.eval) {
    Scene s = read_kitti_scene(d / "data" / e.points, d / "data" / e.labels);
    s = remap_labels(s, vocab, LabelSplit::kEval);
    const VoxelGrid grid = majority_vote_targets(voxelize(s, cfg.grid), s.labels);
    PanopticPrediction p;
    p.spec = grid.spec;
    p.voxels = grid.voxels;
    for (std::size_t row = 0; row < grid.size(); ++row) {
      const std::uint32_t sem = grid.semantic_target[row], inst = grid.instance_target[row];
      VoxelPrediction r;
      if (sem < vocab.known_count()) {
        r.kind = vocab.is_thing(sem) ? VoxelKind::kThing : VoxelKind::kStuff;
        r.class_id = sem;
        r.instance_id = vocab.is_thing(sem) ? inst : 0;
      } else if (sem == kUnknownLabel && inst > 0) {
        r.kind = VoxelKind::kUnknown;
        r.instance_id = inst;
      } else {
        r.kind = VoxelKind::kUnknownNoise;
      }
      p.records.push_back(r);
    }
    write_prediction_text(p, d / "pred" / (e.id + ".pred"));
  }
}

}  // namespace

TEST_CASE("auroc uses midranks for ties") {
  const std::vector<double> hi{2.0, 3.0}, lo{0.0, 1.0};
  CHECK(auroc(hi, lo) == 1.0);
  CHECK(auroc(lo, hi) == 0.0);
  CHECK(auroc(std::vector<double>{1.0, 1.0}, std::vector<double>{1.0}) == 0.5);
  // Pairs: (1,2) lose, (1,0) win, (2,2) tie, (2,0) win.
  CHECK(auroc(std::vector<double>{1.0, 2.0}, std::vector<double>{2.0, 0.0}) == doctest::Approx(0.625));
  CHECK(std::isnan(auroc({}, lo)));
  CHECK(std::isnan(auroc(hi, {})));
}

TEST_CASE("scene seeds differ across splits and indices") {
  CHECK(scene_seed(0, 0, 0) != scene_seed(0, 1, 0));
  CHECK(scene_seed(0, 0, 0) != scene_seed(0, 0, 1));
  CHECK(scene_seed(0, 0, 0) != scene_seed(1, 0, 0));
  CHECK(scene_seed(7, 1, 3) == scene_seed(7, 1, 3));
}

TEST_CASE("flags override the config file, which overrides defaults") {
  ScratchDir d("cli_cfg");
  std::ofstream(d / "c.json") << R"({"seed": 5, "infer": {"t": 2.0, "u_floor": 0.25}})";
  const Run r = run({"--config", (d / "c.json").string(), "--print-config", "--infer.t", "1.5"});
  REQUIRE(r.code == 0);
  const json j = json::parse(r.out);
  CHECK(j["seed"] == 5);
  CHECK(j["infer"]["t"] == 1.5);
  CHECK(j["infer"]["u_floor"] == 0.25);
  CHECK(j["infer"]["dbscan_eps"] == 0.5);

  const Run seeded = run({"--config", (d / "c.json").string(), "--seed", "9", "--print-config"});
  CHECK(json::parse(seeded.out)["seed"] == 9);

  const Run bad = run({"--print-config", "--infer.nope", "1"});
  CHECK(bad.code == kExitConfig);
  CHECK(bad.err.find("infer.nope") != std::string::npos);
  CHECK(run({"--print-config", "--infer.t", "abc"}).code == kExitConfig);
  CHECK(run({"--print-config", "--infer.fallback", "maybe"}).code == kExitConfig);
  CHECK(run({}).code == kExitConfig);
}

TEST_CASE("synth is deterministic for a fixed seed") {
  ScratchDir a("cli_synth_a"), b("cli_synth_b");
  REQUIRE(run(cmd("synth", small(a))).code == 0);
  REQUIRE(run(cmd("synth", small(b))).code == 0);
  for (const auto& e : fs::recursive_directory_iterator(a / "data")) {
    if (e.is_regular_file()) {
      const fs::path rel = fs::relative(e.path(), a / "data");
      CHECK(evipan::test::file_bytes(e.path()) == evipan::test::file_bytes(b / "data" / rel));
    }
  }
  const Manifest m = read_manifest(a / "data");
  CHECK(m.train.size() == 2);
  CHECK(m.eval.size() == 2);
  CHECK_THROWS_AS(read_manifest(a / "missing"), IoError);
}

TEST_CASE("train with zero epochs saves the initializer") {
  ScratchDir d("cli_train0");
  REQUIRE(run(cmd("synth", small(d))).code == 0);
  REQUIRE(run(cmd("train", small(d, {"--epochs", "0", "--seed", "11"}))).code == 0);
  RunConfig cfg;
  cfg.seed = 11;
  cfg.set("embed.dim", "8");
  cfg.finalize();
  CHECK(load_checkpoint(d / "m.ckpt") ==
        HeadParams::glorot(kFeatureDim, cfg.vocabulary().known_count(), 8, cfg.train.seed));
}

TEST_CASE("the pipeline runs end to end and rejects mismatched inputs") {
  ScratchDir d("cli_pipeline");
  REQUIRE(run(cmd("synth", small(d))).code == 0);
  CHECK(run(cmd("eval", small(d))).code == kExitData);  // no predictions yet
  REQUIRE(run(cmd("voxelize", small(d))).code == 0);
  CHECK(fs::exists(d / "vox" / "eval_000000.vox"));
  REQUIRE(run(cmd("train", small(d))).code == 0);
  CHECK(fs::exists(d / "log.jsonl"));

  // An absurd t flags nothing.
  REQUIRE(run(cmd("infer", small(d, {"--infer.t", "1000"}))).code == 0);
  for (const auto& e : fs::directory_iterator(d / "pred")) {
    for (const auto& r : read_prediction(e.path()).records) {
      CHECK(r.kind != VoxelKind::kUnknown);
      CHECK(r.kind != VoxelKind::kUnknownNoise);
    }
  }
  REQUIRE(run(cmd("infer", small(d, {"--infer.format", "binary"}))).code == 0);
  const Run ev = run(cmd("eval", small(d)));
  REQUIRE(ev.code == 0);
  const json rep = read_json(d / "report.json");
  CHECK(rep["scenes"] == 2);
  CHECK(rep.contains("uncertainty"));

  // A checkpoint with the wrong class count is refused.
  save_checkpoint(HeadParams::glorot(kFeatureDim, 7, 8, 1), d / "wrong.ckpt");
  CHECK(run(cmd("infer", small(d, {"--paths.checkpoint", (d / "wrong.ckpt").string()}))).code == kExitData);
  save_checkpoint(HeadParams::glorot(kFeatureDim + 1, 4, 8, 1), d / "wide.ckpt");
  CHECK(run(cmd("infer", small(d, {"--paths.checkpoint", (d / "wide.ckpt").string()}))).code == kExitData);
}

TEST_CASE("predictions copied from the ground truth score perfectly") {
  ScratchDir d("cli_oracle");
  REQUIRE(run(cmd("synth", small(d))).code == 0);
  write_oracle_predictions(d);
  REQUIRE(run(cmd("eval", small(d))).code == 0);
  const json rep = read_json(d / "report.json");
  CHECK(rep["known"]["PQ"] == 1.0);
  CHECK(rep["known"]["SQ"] == 1.0);
  CHECK(rep["known"]["RQ"] == 1.0);
  CHECK(rep["unknown"]["UQ"] == 1.0);
  CHECK(rep["unknown"]["Recall"] == 1.0);

  REQUIRE(run(cmd("eval", small(d, {"--eval.level", "point"}))).code == 0);
  CHECK(read_json(d / "report.json")["known"]["PQ"].get<double>() > 0.9);

  fs::remove_all(d / "pred");
  fs::create_directories(d / "pred");
  CHECK(run(cmd("eval", small(d))).code == kExitData);
}

TEST_CASE("gradcheck passes and fails on a corrupted gradient") {
  CHECK(run({"gradcheck", "--gradcheck.cases", "2"}).code == 0);
  const Run bad = run({"gradcheck", "--gradcheck.cases", "2", "--gradcheck.corrupt", "push"});
  CHECK(bad.code == kExitCheckFailed);
  CHECK(bad.out.find("FAIL") != std::string::npos);
  CHECK(run({"gradcheck", "--gradcheck.corrupt", "nothing"}).code == kExitConfig);
}

TEST_CASE("ablate reports one row per variant") {
  ScratchDir d("cli_ablate");
  REQUIRE(run(cmd("synth", small(d))).code == 0);
  REQUIRE(run(cmd("ablate", small(d))).code == 0);
  const json j = read_json(d / "ablation.json");
  REQUIRE(j["variants"].size() == 5);
  CHECK(j["variants"][0]["variant"] == "softmax_entropy");
  CHECK(j["variants"][4]["variant"] == "dirichlet_full");
  CHECK(j["checks"].contains("auroc_dirichlet_full_above_softmax"));
  CHECK(j["checks"].contains("uq_non_decreasing_over_loss_ladder"));
}
