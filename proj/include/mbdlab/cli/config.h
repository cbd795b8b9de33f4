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

#ifndef MBDLAB_CLI_CONFIG_H_
#define MBDLAB_CLI_CONFIG_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mbdlab/eval/experiments.h"
#include "mbdlab/mbd/branch.h"
#include "mbdlab/ranker/ranker.h"
#include "mbdlab/signals/signals.h"
#include "mbdlab/synthenv/generator.h"

namespace mbdlab::cli {

struct RankerSection {
  ranker::RankerConfig model;
  ranker::TrainOptions train;
  double learning_rate = 1e-3;
  std::size_t holdout_every = 5;  // row i is held out when i % holdout_every == 0
};

struct BranchConfig {
  std::string name;
  std::vector<std::string> tokens;
  mbd::BranchSpec spec;  // features resolved against the synthetic schema
  mbd::FitOptions fit;
};

struct PolicyConfig {
  std::map<std::string, double> weights;  // by task name
  signals::VmPolicy vm;                   // weights in task order
  std::string rps_branch;
};

struct StalenessConfig {
  bool enabled = true;
  std::size_t indices = 30;
  double end_multiplier = 0.8;
  eval::StalenessSetup setup;
};

struct EvalConfig {
  eval::ClusterOptions cluster;
  eval::CorrelationOptions correlation;
  std::vector<std::string> quality_branches;
  std::string watch_branch;
  std::string loop_branch;
  std::vector<std::string> fit_branches;
  std::size_t fit_buckets = 10;
  eval::SlateOptions slate;
  std::size_t rerank_requests = 200;
  StalenessConfig staleness;
};

// Everything a run depends on. Component seeds are derived from `seed`:
// generator = seed, ranker init = seed + 1, ranker shuffle = seed + 2,
// branch k init = seed + 100 + k, branch k fit = seed + 200 + k,
// staleness = seed + 300.
struct ExperimentConfig {
  std::uint64_t seed = 42;
  std::string output_dir = "out";
  synthenv::GeneratorConfig generator;
  std::vector<ranker::TaskSpec> tasks;
  RankerSection ranker;
  std::vector<BranchConfig> branches;
  PolicyConfig policy;
  EvalConfig eval;

  nlohmann::json resolved;  // canonical form, generator inlined, no output_dir
  std::string hash;         // FNV-1a 64 of resolved.dump(), 16 hex digits

  const BranchConfig& branch(const std::string& name) const;
};

// Parses and validates the whole config before anything is computed. Throws
// ConfigError carrying the field path (e.g. "mbd.branches[1].features[2]").
// A string "generator" is a path, relative to `base_dir`, of a JSON file with
// the generator object.
ExperimentConfig parse_config(const nlohmann::json& j, const std::string& base_dir,
                              std::optional<std::uint64_t> seed_override = std::nullopt);
ExperimentConfig load_config(const std::string& path,
                             std::optional<std::uint64_t> seed_override = std::nullopt);

std::string fnv1a64_hex(const std::string& bytes);

// "mbdlab config_hash=<hash> seed=<seed>", the first comment of every file.
std::string provenance(const ExperimentConfig& config);

}  // namespace mbdlab::cli

#endif  // MBDLAB_CLI_CONFIG_H_
