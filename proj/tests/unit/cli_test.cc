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

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "mbdlab/cli/config.h"
#include "mbdlab/cli/pipeline.h"
#include "mbdlab/errors.h"

using namespace mbdlab;
using namespace mbdlab::cli;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json small_config() {
  synthenv::GeneratorConfig g;
  g.num_users = 200;
  g.num_items = 500;
  g.num_interactions = 1500;
  json branch = {{"name", "wt"},
                 {"task", "watch_time"},
                 {"features", {"user_full", "item_length"}},
                 {"hidden", {8}},
                 {"steps", 20}};
  json loop = {{"name", "lp"}, {"task", "loop"}, {"features", {"item_length"}}, {"steps", 20}};
  return {{"seed", 5},
          {"generator", synthenv::to_json(g)},
          {"tasks",
           {{{"name", "watch_time"}, {"kind", "regression"}},
            {{"name", "like"}, {"kind", "binary"}},
            {{"name", "loop"}, {"kind", "binary"}}}},
          {"ranker", {{"trunk", {16}}, {"head_hidden", {8}}, {"epochs", 1}}},
          {"mbd", {{"branches", {branch, loop}}}},
          {"policy",
           {{"weights", {{"watch_time", 1.0}, {"like", 0.5}, {"loop", 0.5}}},
            {"rps_branch", "wt"}}},
          {"eval",
           {{"quality_branches", {"wt"}},
            {"correlation", {{"watch_branch", "wt"}, {"loop_branch", "lp"}}},
            {"fit_branches", {"wt"}},
            {"rerank_requests", 4},
            {"slate_size", 20},
            {"staleness", {{"enabled", false}}}}}};
}

// Fresh scratch directory under the system temp dir.
fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mbdlab_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_config(const fs::path& dir, const json& j) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

std::string config_error_path(const json& j) {
  try {
    parse_config(j, ".");
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config: a valid file parses and derives component seeds") {
  const ExperimentConfig c = parse_config(small_config(), ".");
  CHECK(c.seed == 5);
  CHECK(c.generator.seed == 5);
  CHECK(c.ranker.model.seed == 6);
  CHECK(c.ranker.train.seed == 7);
  CHECK(c.branches[1].spec.seed == 106);
  CHECK(c.branches[1].fit.seed == 206);
  CHECK(c.branch("lp").spec.space == mbd::Space::kLogit);
  CHECK(c.policy.vm.weights == std::vector<double>{1.0, 0.5, 0.5});
  CHECK(c.hash.size() == 16);
  CHECK(provenance(c) == "mbdlab config_hash=" + c.hash + " seed=5");

  const ExperimentConfig o = parse_config(small_config(), ".", 9);
  CHECK(o.seed == 9);
  CHECK(o.hash != c.hash);
}

TEST_CASE("config: errors name the offending field") {
  json j = small_config();
  j["mbd"]["branches"][0]["features"][1] = "item_colour";
  CHECK(config_error_path(j) == "mbd.branches[0].features[1]");

  j = small_config();
  j["ranker"]["epoch"] = 3;
  CHECK(config_error_path(j) == "ranker.epoch");

  j = small_config();
  j["policy"]["rps_branch"] = "nope";
  CHECK(config_error_path(j) == "policy.rps_branch");

  j = small_config();
  j["mbd"]["branches"][1]["space"] = "log1p";
  CHECK(config_error_path(j) == "mbd.branches[1].space");

  j = small_config();
  j["eval"]["correlation"]["watch_branch"] = "lp";
  CHECK(config_error_path(j) == "eval.correlation.watch_branch");

  j = small_config();
  j["generator"].erase("watch_noise");
  CHECK(config_error_path(j) == "generator.watch_noise");

  j = small_config();
  j["tasks"][1]["kind"] = "ordinal";
  CHECK(config_error_path(j) == "tasks[1].kind");
}

TEST_CASE("cli: a config error exits 2 before anything is written") {
  const fs::path dir = scratch("config_error");
  json j = small_config();
  j["mbd"]["branches"][0]["features"][0] = "user_shoe_size";
  const fs::path cfg = write_config(dir, j);
  std::ostringstream err;
  RunOptions o;
  o.out_dir = (dir / "out").string();
  CHECK(run_cli(cfg.string(), std::nullopt, "all", o, err) == kExitConfig);
  CHECK(err.str().find("mbd.branches[0].features[0]") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "out"));

  std::ostringstream err2;
  CHECK(run_cli(cfg.string(), std::nullopt, "bake", o, err2) == kExitConfig);
  CHECK(run_cli((dir / "absent.json").string(), std::nullopt, "all", o, err2) == kExitConfig);
}

TEST_CASE("cli: a stage without its upstream artifact exits 3") {
  const fs::path dir = scratch("missing");
  const fs::path cfg = write_config(dir, small_config());
  RunOptions o;
  o.out_dir = (dir / "out").string();
  for (const char* stage : {"train-ranker", "train-mbd", "rerank", "report"}) {
    std::ostringstream err;
    CHECK(run_cli(cfg.string(), std::nullopt, stage, o, err) == kExitMissingArtifact);
  }
  std::ostringstream err;
  run_cli(cfg.string(), std::nullopt, "train-mbd", o, err);
  CHECK(err.str().find("gen-data") != std::string::npos);
}

TEST_CASE("cli: stages chain, and gen-data is deterministic per seed") {
  const fs::path dir = scratch("stages");
  const fs::path cfg = write_config(dir, small_config());
  RunOptions a, b, c;
  a.out_dir = (dir / "a").string();
  b.out_dir = (dir / "b").string();
  c.out_dir = (dir / "c").string();
  std::ostringstream err;
  REQUIRE(run_cli(cfg.string(), std::nullopt, "gen-data", a, err) == kExitOk);
  REQUIRE(run_cli(cfg.string(), std::nullopt, "gen-data", b, err) == kExitOk);
  REQUIRE(run_cli(cfg.string(), 6, "gen-data", c, err) == kExitOk);
  const std::string da = slurp(dir / "a" / artifacts::kDataset);
  CHECK(da == slurp(dir / "b" / artifacts::kDataset));
  CHECK(da != slurp(dir / "c" / artifacts::kDataset));
  CHECK(da.rfind("# mbdlab config_hash=", 0) == 0);

  for (const char* stage : {"train-ranker", "train-mbd", "rerank", "report"}) {
    CHECK_MESSAGE(run_cli(cfg.string(), std::nullopt, stage, a, err) == kExitOk, stage, err.str());
  }
  for (const char* f : {artifacts::kCandidates, artifacts::kReranked, artifacts::kTable1,
                        artifacts::kTable2, artifacts::kTable3, artifacts::kBucketFit,
                        artifacts::kStaleness}) {
    CHECK_MESSAGE(slurp(dir / "a" / f).rfind("# mbdlab config_hash=", 0) == 0, f);
  }
  const json summary = json::parse(slurp(dir / "a" / artifacts::kSummary));
  CHECK(summary["provenance"]["seed"] == 5);
  CHECK(summary["staleness"].is_null());
}

TEST_CASE("candidates: round trip, and malformed rows are skipped and counted") {
  CandidateFile f;
  f.tasks = {"watch_time", "like"};
  f.columns = {"item_duration"};
  f.rows = {{0, 10, {2.5, 0.1}, {30.0}}, {0, 11, {1.0, 0.2}, {5.0}}};
  std::stringstream ss;
  write_candidates(ss, f, {"hello"});
  ss << "0,12,1.0,0.3\n"          // short row
     << "0,13,nan,0.3,4\n"        // non-finite
     << "x,14,1.0,0.3,4\n"        // bad id
     << "1,15,1.0,abc,4\n"        // bad number
     << "1,16,1.5,0.25,12\n";
  const CandidateFile g = read_candidates(ss);
  CHECK(g.tasks == f.tasks);
  CHECK(g.columns == f.columns);
  CHECK(g.malformed == 4);
  REQUIRE(g.rows.size() == 3);
  CHECK(g.rows[0].predictions == f.rows[0].predictions);
  CHECK(g.rows[2].candidate_id == 16);
  CHECK(g.rows[2].xprime == std::vector<double>{12.0});

  std::stringstream bad("candidate_id,request_id\n");
  CHECK_THROWS(read_candidates(bad));
}

TEST_CASE("rerank: ordering, ties and the filter strategy") {
  // A linear branch with every weight zero: mu = 3 and sigma = 1 everywhere,
  // so the RPS of a candidate is its watch-time prediction minus 3.
  mbd::BranchSpec spec;
  spec.task = "watch_time";
  spec.features = {"dur", {"item_duration"}};
  spec.hidden = {};
  mbd::MbdBranch branch(spec, synthenv::synthetic_schema(4));
  for (numerics::Param& p : branch.params().params()) {
    std::fill(p.value.begin(), p.value.end(), p.name == "mean/b0" ? 3.0 : 0.0);
  }

  CandidateFile f;
  f.tasks = {"watch_time", "like"};
  f.columns = {"item_duration"};
  // request 1 listed first on purpose; output is by request id.
  f.rows = {{1, 40, {2.0, 0.0}, {1.0}},
            {0, 7, {4.0, 0.0}, {1.0}},   // s = 4.0, rps = 1
            {0, 3, {1.0, 5.0}, {1.0}},   // s = 6.0, rps = -2
            {0, 9, {3.0, 0.0}, {1.0}},   // s = 3.0, rps = 0
            {0, 5, {3.0, 0.0}, {1.0}},   // tie with 9, lower id first
            {0, 1, {2.5, 0.0}, {1.0}}};  // s = 2.5, rps = -0.5
  const std::map<std::string, double> weights{{"watch_time", 1.0}, {"like", 1.0}};

  auto order = [](const RerankResult& r, std::uint64_t request) {
    std::vector<std::uint64_t> ids;
    for (const RerankRow& row : r.rows) {
      if (row.request_id == request) ids.push_back(row.candidate_id);
    }
    return ids;
  };

  signals::VmPolicy none;
  none.weights = {1.0, 1.0};
  const RerankResult a = rerank(f, weights, none, branch);
  CHECK(order(a, 0) == std::vector<std::uint64_t>{3, 7, 5, 9, 1});
  CHECK(a.rows.front().request_id == 0);
  CHECK(a.rows.back().request_id == 1);
  CHECK(a.rows[0].rank == 1);
  CHECK(a.rows[4].rank == 5);
  CHECK(a.rows[0].rps == doctest::Approx(-2.0));
  CHECK(a.rows[1].rps == doctest::Approx(1.0));

  signals::VmPolicy filter = none;
  filter.strategy = signals::Strategy::kFilter;
  filter.beta = 1.5;
  // 3 falls below -beta; the next survivor takes the top slot.
  const RerankResult b = rerank(f, weights, filter, branch);
  CHECK(order(b, 0) == std::vector<std::uint64_t>{7, 5, 9, 1, 3});
  CHECK(b.rows[4].adjusted == 0.0);
  CHECK(b.rows[4].s_final == doctest::Approx(6.0));
  // With beta = 0.25, 1 is cut too; the two zeroed candidates fall back to id order.
  filter.beta = 0.25;
  const RerankResult c = rerank(f, weights, filter, branch);
  CHECK(order(c, 0) == std::vector<std::uint64_t>{7, 5, 9, 1, 3});
  CHECK(c.rows[3].adjusted == 0.0);

  std::ostringstream out;
  write_reranked(out, b, {"x"});
  CHECK(out.str().rfind("# x\nrequest_id,rank,candidate_id,s_final,rps,adjusted,fell_back\n", 0) ==
        0);

  CHECK_THROWS_AS(rerank(f, {{"loop", 1.0}}, none, branch), std::invalid_argument);
}
