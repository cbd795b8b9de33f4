// Copyright 2026 The mbdlab Authors.
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

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mbdlab/cli/pipeline.h"

int main(int argc, char** argv) {
  CLI::App app{"mbdlab: multi-task ranker with a model-based debiasing branch"};
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string stage = "all";
  mbdlab::cli::RunOptions options;
  bool quiet = false;

  app.add_option("--config", config_path, "experiment config (JSON)")->required();
  app.add_option("--seed", seed, "overrides the config seed");
  app.add_option("--out", options.out_dir, "output directory (default: config output_dir)");
  app.add_option("--stage", stage, "gen-data | train-ranker | train-mbd | rerank | report | all");
  app.add_option("--candidates", options.candidates_path,
                 "rerank input CSV (default: built from held-out rows)");
  app.add_flag("--quiet", quiet, "no progress lines");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : mbdlab::cli::kExitConfig;
  }
  if (!quiet) options.log = &std::cerr;
  return mbdlab::cli::run_cli(config_path, seed, stage, options, std::cerr);
}
