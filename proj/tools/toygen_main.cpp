// Copyright 2026 The mospred Authors
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
//
// Generates the synthetic tone-in-noise benchmark plus a ready-to-run
// config.json so the whole pipeline can be exercised end to end.

#include <CLI11.hpp>
#include <cstdio>

#include "mospred/config.hpp"
#include "mospred/toydata.hpp"

using namespace mospred;

int main(int argc, char** argv) {
  CLI::App app{"Synthetic benchmark generator for the MOS pipeline"};
  std::string out_dir = "toy_data";
  uint64_t seed = 1;
  int systems = 25;
  int per_system = 10;
  int train_per_system = 8;
  int dev_per_system = 2;
  int domains = 1;
  double seconds = 1.0;
  int strong_steps = 2000;
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--seed", seed, "Generator seed (also written to config)");
  app.add_option("--systems", systems, "Number of synthetic systems");
  app.add_option("--per-system", per_system, "Utterances per system");
  app.add_option("--train-per-system", train_per_system,
                 "Training utterances per system");
  app.add_option("--dev-per-system", dev_per_system,
                 "Dev utterances per system (rest go to test)");
  app.add_option("--domains", domains, "Number of domains");
  app.add_option("--seconds", seconds, "Utterance duration");
  app.add_option("--strong-steps", strong_steps,
                 "total_steps written into the strong config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    toydata::ToyDataConfig dcfg;
    dcfg.n_systems = systems;
    dcfg.utts_per_system = per_system;
    dcfg.train_per_system = train_per_system;
    dcfg.dev_per_system = dev_per_system;
    dcfg.n_domains = domains;
    dcfg.seconds = seconds;
    dcfg.seed = seed;
    const toydata::ToyPaths paths = toydata::generate(dcfg, out_dir);

    RunConfig cfg;
    cfg.seed = seed;
    cfg.dataset.ratings_csv = paths.ratings_csv.string();
    cfg.dataset.audio_dir = paths.audio_dir.string();
    cfg.dataset.transcripts = paths.transcripts_tsv.string();
    cfg.dataset.splits_file = paths.splits_json.string();
    cfg.backend = {"toy64", "toy", 64, 7};
    cfg.strong = toydata::toy_strong_config(strong_steps);
    cfg.augment.enabled = false;
    cfg.weak.backends = {{"toy64", "toy", 64, 7},
                         {"toy48", "toy", 48, 21},
                         {"toy32", "toy", 32, 33}};
    cfg.weak.methods = {"ridge", "random-forest", "kernel-svr"};
    cfg.weak.domains = {""};
    cfg.stacking.n_folds = 5;
    cfg.stacking.strong_checkpoints = {"strong.ckpt"};
    cfg.stacking.strong_oof_mode = "dev-shortcut";
    cfg.stacking.weak_specs = {
        {"toy64", WeakMethod::kRidge, "", {}},
        {"toy48", WeakMethod::kRandomForest, "", {{"trees", 30}}},
        {"toy32", WeakMethod::kKernelSvr, "", {}},
    };
    cfg.stacking.stage2_methods = {WeakMethod::kRidge,
                                   WeakMethod::kGaussianProcess};
    cfg.stacking.stage3_method = WeakMethod::kRidge;

    const std::filesystem::path config_path =
        std::filesystem::path(out_dir) / "config.json";
    std::ofstream out(config_path);
    if (!out) throw UsageError("cannot write " + config_path.string());
    out << Json(cfg).dump(2) << '\n';

    std::printf("generated %d utterances under %s\n", systems * per_system,
                out_dir.c_str());
    std::printf("config: %s\n", config_path.string().c_str());
    return 0;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "mospred-toygen: error: usage: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "mospred-toygen: error: runtime: %s\n", e.what());
    return 1;
  }
}
