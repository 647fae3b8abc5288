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

#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "evipan/commands.hpp"
#include "evipan/errors.hpp"

namespace evipan {

namespace {

using CommandFn = int (*)(const RunConfig&, std::ostream&);

struct Command {
  const char* name;
  const char* help;
  CommandFn fn;
  const char* out_key;  // target of --out
};

const std::vector<Command>& commands() {
  static const std::vector<Command> c = {
      {"synth", "Generate a synthetic SemanticKITTI-format dataset", cmd_synth, "paths.data"},
      {"voxelize", "Voxelize every dataset scene onto the polar grid", cmd_voxelize,
       "paths.voxels"},
      {"train", "Train the per-voxel head", cmd_train, "paths.checkpoint"},
      {"infer", "Write panoptic predictions for the evaluation scenes", cmd_infer,
       "paths.predictions"},
      {"eval", "Score predictions against ground truth", cmd_eval, "paths.report"},
      {"gradcheck", "Verify analytic gradients by finite differences", cmd_gradcheck, nullptr},
      {"ablate", "Train and compare uncertainty variants", cmd_ablate, "paths.ablation"},
  };
  return c;
}

/// Turns leftover "--key value" arguments into overrides; a bare "--key"
/// means true.
std::vector<std::pair<std::string, std::string>> overrides(const std::vector<std::string>& args,
                                                           const char* out_key) {
  static const std::map<std::string, std::string> aliases = {
      {"train", "synth.train"}, {"eval", "synth.eval"}, {"epochs", "train.epochs"}};
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a.rfind("--", 0) != 0 || a.size() <= 2) {
      throw ConfigError("unexpected argument '" + a + "'");
    }
    std::string key = a.substr(2), value;
    if (i + 1 < args.size() && args[i + 1].rfind("--", 0) != 0) {
      value = args[++i];
    } else {
      value = "true";
    }
    if (key == "out") {
      if (out_key == nullptr) {
        throw ConfigError("--out is not used by this command");
      }
      key = out_key;
    } else if (auto it = aliases.find(key); it != aliases.end()) {
      key = it->second;
    }
    out.emplace_back(key, value);
  }
  return out;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Uncertainty-guided open-set LiDAR panoptic segmentation on polar voxel grids."};
  app.name("evipan");
  app.footer(
      "Every configuration key is also a flag: --grid.h 64, --infer.t=2.5, --run.parallel.\n"
      "Aliases: --train/--eval (synth.train/eval), --epochs (train.epochs), --out (the\n"
      "command's main output path). Flags override --config values, which override defaults.\n"
      "Use --print-config to list every key with its effective value.");
  app.allow_extras();
  app.require_subcommand(0, 1);

  std::string config_path;
  std::string seed;
  bool print_config = false;
  app.add_option("--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Global seed (scenes, initialization, sampling)");
  app.add_flag("--print-config", print_config, "Print the effective configuration and exit");

  std::vector<CLI::App*> subs;
  for (const auto& c : commands()) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->allow_extras();
    sub->fallthrough();
    subs.push_back(sub);
  }

  // "--key=value" is split up front; CLI11 reports unknown options in that
  // form inconsistently.
  std::vector<std::string> args;
  for (int i = argc - 1; i >= 1; --i) {
    const std::string a = argv[i];
    const auto eq = a.find('=');
    if (a.rfind("--", 0) == 0 && eq != std::string::npos) {
      args.push_back(a.substr(eq + 1));
      args.push_back(a.substr(0, eq));
    } else {
      args.push_back(a);
    }
  }

  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitConfig;
  }

  const Command* selected = nullptr;
  std::vector<std::string> extras = app.remaining();
  for (std::size_t i = 0; i < subs.size(); ++i) {
    if (subs[i]->parsed()) {
      selected = &commands()[i];
      const auto more = subs[i]->remaining();
      extras.insert(extras.end(), more.begin(), more.end());
    }
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) {
      cfg.merge_file(config_path);
    }
    if (!seed.empty()) {
      cfg.set("seed", seed);
    }
    for (const auto& [key, value] : overrides(extras, selected ? selected->out_key : nullptr)) {
      cfg.set(key, value);
    }
    cfg.finalize();
    if (print_config) {
      out << cfg.to_json().dump(2) << "\n";
      return kExitOk;
    }
    if (selected == nullptr) {
      out << app.help();
      return kExitConfig;
    }
    return selected->fn(cfg, out);
  } catch (const ConfigError& e) {
    err << "evipan: configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const SpecError& e) {
    err << "evipan: configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    err << "evipan: " << e.what() << "\n";
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "evipan: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "evipan: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace evipan
