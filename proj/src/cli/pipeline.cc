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

#include "mbdlab/cli/pipeline.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "mbdlab/errors.h"
#include "mbdlab/eval/experiments.h"
#include "mbdlab/eval/metrics.h"

namespace mbdlab::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::kGenData:
      return "gen-data";
    case Stage::kTrainRanker:
      return "train-ranker";
    case Stage::kTrainMbd:
      return "train-mbd";
    case Stage::kRerank:
      return "rerank";
    case Stage::kReport:
      return "report";
    case Stage::kAll:
      return "all";
  }
  return "";
}

Stage stage_from_string(const std::string& name) {
  for (Stage s : {Stage::kGenData, Stage::kTrainRanker, Stage::kTrainMbd, Stage::kRerank,
                  Stage::kReport, Stage::kAll}) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("stage", "unknown stage '" + name +
                                 "' (gen-data, train-ranker, train-mbd, rerank, report, all)");
}

std::string artifacts::branch_checkpoint(const std::string& branch) {
  return "branch_" + branch + ".ckpt";
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_cells(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

bool parse_u64(const std::string& s, std::uint64_t& out) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) return false;
  try {
    out = std::stoull(s);
  } catch (const std::exception&) {
    return false;
  }
  return true;
}

void write_comments(std::ostream& out, const std::vector<std::string>& comments) {
  for (const std::string& c : comments) out << "# " << c << "\n";
}

}  // namespace

void write_candidates(std::ostream& out, const CandidateFile& file,
                      const std::vector<std::string>& comments) {
  write_comments(out, comments);
  out << "request_id,candidate_id";
  for (const std::string& t : file.tasks) out << ",pred_" << t;
  for (const std::string& c : file.columns) out << ",x_" << c;
  out << "\n";
  for (const Candidate& c : file.rows) {
    out << c.request_id << "," << c.candidate_id;
    for (double v : c.predictions) out << "," << format_double(v);
    for (double v : c.xprime) out << "," << format_double(v);
    out << "\n";
  }
}

CandidateFile read_candidates(std::istream& in) {
  CandidateFile f;
  std::string line;
  bool header = false;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const std::vector<std::string> cells = split_cells(line);
    if (!header) {
      if (cells.size() < 2 || cells[0] != "request_id" || cells[1] != "candidate_id") {
        throw std::runtime_error("candidates: header must start with request_id,candidate_id");
      }
      for (std::size_t i = 2; i < cells.size(); ++i) {
        if (cells[i].rfind("pred_", 0) == 0 && f.columns.empty()) {
          f.tasks.push_back(cells[i].substr(5));
        } else if (cells[i].rfind("x_", 0) == 0) {
          f.columns.push_back(cells[i].substr(2));
        } else {
          throw std::runtime_error("candidates: unexpected column '" + cells[i] + "'");
        }
      }
      width = cells.size();
      header = true;
      continue;
    }
    Candidate c;
    bool ok = cells.size() == width && parse_u64(cells[0], c.request_id) &&
              parse_u64(cells[1], c.candidate_id);
    for (std::size_t i = 2; ok && i < cells.size(); ++i) {
      double v = 0.0;
      ok = parse_double(cells[i], v);
      (i < 2 + f.tasks.size() ? c.predictions : c.xprime).push_back(v);
    }
    if (!ok) {
      ++f.malformed;
      continue;
    }
    f.rows.push_back(std::move(c));
  }
  if (!header) throw std::runtime_error("candidates: missing header");
  return f;
}

double to_branch_space(const mbd::MbdBranch& branch, double prediction) {
  switch (branch.spec().space) {
    case mbd::Space::kLog1p:
    case mbd::Space::kProbability:
      return prediction;
    case mbd::Space::kLogit:
      return mbd::logit_target(prediction);
  }
  return prediction;
}

RerankResult rerank(const CandidateFile& candidates, const std::map<std::string, double>& weights,
                    const signals::VmPolicy& policy, const mbd::MbdBranch& branch) {
  std::vector<double> w(candidates.tasks.size(), 0.0);
  for (const auto& [task, weight] : weights) {
    auto it = std::find(candidates.tasks.begin(), candidates.tasks.end(), task);
    if (it == candidates.tasks.end()) {
      throw std::invalid_argument("candidates carry no prediction for task '" + task + "'");
    }
    w[it - candidates.tasks.begin()] = weight;
  }
  auto rt = std::find(candidates.tasks.begin(), candidates.tasks.end(), branch.spec().task);
  if (rt == candidates.tasks.end()) {
    throw std::invalid_argument("candidates carry no prediction for the branch task '" +
                                branch.spec().task + "'");
  }
  const std::size_t rps_task = rt - candidates.tasks.begin();
  if (candidates.columns != branch.spec().features.columns) {
    throw std::invalid_argument("candidate x' columns do not match branch '" +
                                branch.spec().features.name + "'");
  }

  RerankResult result;
  std::map<std::uint64_t, std::vector<RerankRow>> requests;
  for (const Candidate& c : candidates.rows) {
    RerankRow r;
    r.request_id = c.request_id;
    r.candidate_id = c.candidate_id;
    try {
      r.s_final = signals::vm_score(c.predictions, w);
      const double p = to_branch_space(branch, c.predictions[rps_task]);
      const mbd::DistributionEstimate est = branch.estimate(c.xprime);
      r.rps = signals::rps(p, est, policy.sigma_floor);
      const signals::Adjusted a = signals::integrate(r.s_final, r.rps, policy, p, est.mean);
      r.adjusted = a.score;
      r.fell_back = a.fell_back;
    } catch (const std::invalid_argument&) {
      ++result.skipped;
      continue;
    }
    requests[c.request_id].push_back(r);
  }
  for (auto& [id, rows] : requests) {
    std::stable_sort(rows.begin(), rows.end(), [](const RerankRow& a, const RerankRow& b) {
      if (a.adjusted != b.adjusted) return a.adjusted > b.adjusted;
      return a.candidate_id < b.candidate_id;
    });
    for (std::size_t k = 0; k < rows.size(); ++k) {
      rows[k].rank = k + 1;
      result.rows.push_back(rows[k]);
    }
  }
  return result;
}

void write_reranked(std::ostream& out, const RerankResult& result,
                    const std::vector<std::string>& comments) {
  write_comments(out, comments);
  out << "request_id,rank,candidate_id,s_final,rps,adjusted,fell_back\n";
  for (const RerankRow& r : result.rows) {
    out << r.request_id << "," << r.rank << "," << r.candidate_id << ","
        << format_double(r.s_final) << "," << format_double(r.rps) << ","
        << format_double(r.adjusted) << "," << (r.fell_back ? 1 : 0) << "\n";
  }
}

// ---------------------------------------------------------------------------

namespace {

struct Context {
  const ExperimentConfig& config;
  fs::path dir;
  std::ostream* log;
  std::vector<std::string> header;  // provenance comment

  fs::path path(const std::string& name) const { return dir / name; }

  void say(const std::string& msg) const {
    if (log) *log << "[mbdlab] " << msg << "\n";
  }

  std::ofstream create(const std::string& name) const {
    std::ofstream out(path(name), std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path(name).string() + "'");
    return out;
  }

  void need(const std::string& name, const std::string& stage) const {
    if (!fs::exists(path(name))) throw MissingArtifact(path(name).string(), stage);
  }
};

struct Split {
  Dataset train;
  Dataset test;
};

Split split(const Dataset& all, std::size_t every, const FeatureSchema* schema) {
  Split s{Dataset{all.schema, {}}, Dataset{all.schema, {}}};
  for (std::size_t i = 0; i < all.size(); ++i) {
    (i % every == 0 ? s.test : s.train).rows.push_back(all.rows[i]);
  }
  if (schema) {
    s.train.schema = *schema;
  } else {
    fit_normalization(s.train.schema, s.train.rows);
  }
  s.test.schema = s.train.schema;
  return s;
}

Dataset load_data(const Context& ctx) {
  ctx.need(artifacts::kDataset, "gen-data");
  return load_dataset_csv(ctx.path(artifacts::kDataset).string());
}

ranker::RankerModel load_ranker(const Context& ctx) {
  ctx.need(artifacts::kRanker, "train-ranker");
  ctx.need(std::string(artifacts::kRanker) + ".schema.json", "train-ranker");
  return ranker::RankerModel::load(ctx.path(artifacts::kRanker).string());
}

mbd::MbdBranch load_branch(const Context& ctx, const std::string& name) {
  const std::string file = artifacts::branch_checkpoint(name);
  ctx.need(file, "train-mbd");
  return mbd::MbdBranch::load(ctx.path(file).string());
}

std::map<std::string, std::string> meta(const Context& ctx) {
  return {{"provenance", provenance(ctx.config)}};
}

// Natural-unit predictions for every task, [task][row].
std::vector<std::vector<double>> natural_predictions(const ranker::RankerModel& model,
                                                     const Dataset& data) {
  std::vector<std::vector<double>> out = model.predict_outputs(data);
  for (std::size_t t = 0; t < out.size(); ++t) {
    if (!model.tasks()[t].binary()) continue;
    for (double& v : out[t]) v = ranker::sigmoid(v);
  }
  return out;
}

void gen_data(const Context& ctx) {
  ctx.say("generating " + std::to_string(ctx.config.generator.num_interactions) +
          " interactions");
  const Dataset data = synthenv::generate(ctx.config.generator);
  save_dataset_csv(ctx.path(artifacts::kDataset).string(), data, ctx.header);
}

void train_ranker(const Context& ctx) {
  const Dataset all = load_data(ctx);
  const Split s = split(all, ctx.config.ranker.holdout_every, nullptr);
  ctx.say("training ranker on " + std::to_string(s.train.size()) + " rows");
  ranker::RankerModel model(s.train.schema, ctx.config.tasks, ctx.config.ranker.model);
  numerics::Optimizer opt({numerics::OptimizerKind::kAdam, ctx.config.ranker.learning_rate},
                          model.params());
  ranker::TrainOptions to = ctx.config.ranker.train;
  to.diagnostic_path = ctx.path("ranker_diagnostic.ckpt").string();
  ranker::train(model, s.train, opt, to);
  model.save(ctx.path(artifacts::kRanker).string(), meta(ctx));
}

void train_mbd(const Context& ctx) {
  const Dataset all = load_data(ctx);
  const ranker::RankerModel model = load_ranker(ctx);
  const Split s = split(all, ctx.config.ranker.holdout_every, &model.schema());
  for (const BranchConfig& bc : ctx.config.branches) {
    ctx.say("training branch '" + bc.name + "'");
    mbd::MbdBranch b(bc.spec, model.schema());
    const mbd::FitReport r = mbd::train_branch(b, model, s.train, bc.fit);
    if (r.skipped > 0) {
      ctx.say("branch '" + bc.name + "' skipped " + std::to_string(r.skipped) + " rows");
    }
    b.save(ctx.path(artifacts::branch_checkpoint(bc.name)).string(), meta(ctx));
  }
}

void run_rerank(const Context& ctx, const std::string& candidates_path) {
  const mbd::MbdBranch branch = load_branch(ctx, ctx.config.policy.rps_branch);
  CandidateFile cands;
  if (candidates_path.empty()) {
    const Dataset all = load_data(ctx);
    const ranker::RankerModel model = load_ranker(ctx);
    const Split s = split(all, ctx.config.ranker.holdout_every, &model.schema());
    const std::size_t slate = ctx.config.eval.slate.slate_size;
    const std::size_t n = std::min(s.test.size(), ctx.config.eval.rerank_requests * slate);
    const Dataset pool{s.test.schema, {s.test.rows.begin(), s.test.rows.begin() + n}};
    const auto preds = natural_predictions(model, pool);
    for (const ranker::TaskSpec& t : model.tasks()) cands.tasks.push_back(t.name);
    cands.columns = branch.spec().features.columns;
    for (std::size_t i = 0; i < n; ++i) {
      Candidate c;
      c.request_id = i / slate;
      // Position in the full dataset: held-out rows sit at multiples of the stride.
      c.candidate_id = i * ctx.config.ranker.holdout_every;
      for (const auto& col : preds) c.predictions.push_back(col[i]);
      c.xprime = branch.project(pool.rows[i].features);
      cands.rows.push_back(std::move(c));
    }
    std::ofstream out = ctx.create(artifacts::kCandidates);
    write_candidates(out, cands, ctx.header);
  } else {
    std::ifstream in(candidates_path);
    if (!in) throw MissingArtifact(candidates_path, "rerank");
    cands = read_candidates(in);
  }
  const RerankResult r = rerank(cands, ctx.config.policy.weights, ctx.config.policy.vm, branch);
  ctx.say("reranked " + std::to_string(r.rows.size()) + " candidates; " +
          std::to_string(cands.malformed) + " malformed rows and " + std::to_string(r.skipped) +
          " unscorable candidates skipped");
  std::vector<std::string> comments = ctx.header;
  comments.push_back("strategy=" + signals::to_string(ctx.config.policy.vm.strategy) +
                     " malformed=" + std::to_string(cands.malformed) +
                     " skipped=" + std::to_string(r.skipped));
  std::ofstream out = ctx.create(artifacts::kReranked);
  write_reranked(out, r, comments);
}

json rounded(std::optional<double> v) {
  const std::string s = eval::format_fixed(v);
  if (s == "undefined") return nullptr;
  return std::stod(s);
}

void report(const Context& ctx) {
  const ExperimentConfig& c = ctx.config;
  const Dataset all = load_data(ctx);
  const ranker::RankerModel model = load_ranker(ctx);
  std::map<std::string, mbd::MbdBranch> branches;
  for (const BranchConfig& bc : c.branches) branches.emplace(bc.name, load_branch(ctx, bc.name));
  const Split s = split(all, c.ranker.holdout_every, &model.schema());
  json summary;
  summary["provenance"] = {{"config_hash", c.hash},
                           {"seed", c.seed},
                           {"dataset_rows", all.size()},
                           {"train_rows", s.train.size()},
                           {"test_rows", s.test.size()}};

  ctx.say("signal quality");
  std::vector<eval::SignalQuality> quality;
  for (const std::string& name : c.eval.quality_branches) {
    quality.push_back(eval::signal_quality(s.train, s.test, model, branches.at(name),
                                           c.eval.cluster));
  }
  {
    std::ofstream out = ctx.create(artifacts::kTable1);
    eval::write_signal_quality(out, quality, ctx.header);
    json rows = json::array();
    for (const eval::SignalQuality& q : quality) {
      rows.push_back({{"branch", q.branch},
                      {"task", q.task},
                      {"space", q.space},
                      {"count", q.count},
                      {"bias_ranker", rounded(q.bias_ranker)},
                      {"bias_mbd", rounded(q.bias_mbd)},
                      {"nll_cluster", rounded(q.nll_cluster)},
                      {"nll_mbd", rounded(q.nll_mbd)},
                      {"rho_trend", rounded(q.rho_trend)},
                      {"rho_uncertainty", rounded(q.rho_uncertainty)}});
    }
    summary["signal_quality"] = rows;
  }

  ctx.say("debias correlation");
  {
    const auto rows = eval::debias_correlation_report(
        s.train, s.test, model, branches.at(c.eval.watch_branch), branches.at(c.eval.loop_branch),
        c.eval.correlation);
    std::ofstream out = ctx.create(artifacts::kTable2);
    eval::write_correlation(out, rows, ctx.header);
    json j = json::array();
    for (const eval::CorrelationRow& r : rows) {
      j.push_back({{"task", r.task}, {"signal", r.signal}, {"rho", rounded(r.rho)},
                   {"count", r.count}});
    }
    summary["debias_correlation"] = j;
  }

  ctx.say("efficiency");
  {
    std::vector<eval::EfficiencyReportRow> rows = eval::published_efficiency_report();
    std::size_t reproduced = 0;
    for (const auto& r : rows) reproduced += r.reproduced.value_or(false) ? 1 : 0;

    const mbd::MbdBranch& rb = branches.at(c.policy.rps_branch);
    const auto preds = natural_predictions(model, s.test);
    const std::size_t rt = model.task_index(rb.spec().task);
    const mbd::EstimateColumns est = rb.estimate_all(s.test);
    std::vector<double> control(s.test.size()), treatment(s.test.size());
    std::vector<double> yhat(preds.size());
    for (std::size_t i = 0; i < s.test.size(); ++i) {
      for (std::size_t t = 0; t < preds.size(); ++t) yhat[t] = preds[t][i];
      control[i] = signals::vm_score(yhat, c.policy.vm.weights);
      const double p = to_branch_space(rb, preds[rt][i]);
      const double z = signals::rps(p, est.mean[i], std::sqrt(est.variance[i]),
                                    c.policy.vm.sigma_floor);
      treatment[i] = signals::integrate(control[i], z, c.policy.vm, p, est.mean[i]).score;
    }
    json synth = json::array();
    for (const eval::EfficiencyRow& r :
         eval::slate_efficiency(s.test, control, treatment, c.eval.slate)) {
      rows.push_back({"synthetic", r, std::nullopt});
      synth.push_back({{"bucket", r.bucket},
                       {"pct_wt", rounded(r.pct_wt)},
                       {"pct_vv", rounded(r.pct_vv)},
                       {"ratio_pct", rounded(r.ratio)},
                       {"flag", r.flag}});
    }
    std::ofstream out = ctx.create(artifacts::kTable3);
    eval::write_efficiency(out, rows, ctx.header);
    summary["efficiency"] = {{"published_reproduced", reproduced},
                             {"published_total", eval::published_efficiency().size()},
                             {"synthetic", synth}};
  }

  ctx.say("bucket fit");
  {
    std::ofstream out = ctx.create(artifacts::kBucketFit);
    const std::vector<double> edges =
        signals::log_edges(c.generator.min_duration, c.generator.max_duration, c.eval.fit_buckets);
    bool first = true;
    std::size_t empty = 0;
    for (const std::string& name : c.eval.fit_branches) {
      const auto fit = eval::distribution_fit_by_bucket(s.test, model, branches.at(name), edges);
      for (const auto& f : fit) empty += f.empty() ? 1 : 0;
      eval::write_bucket_fit(out, name, fit, first ? ctx.header : std::vector<std::string>{},
                             first);
      first = false;
    }
    summary["bucket_fit"] = {{"branches", c.eval.fit_branches}, {"empty_buckets", empty}};
  }

  ctx.say("staleness");
  {
    std::ofstream out = ctx.create(artifacts::kStaleness);
    const StalenessConfig& st = c.eval.staleness;
    if (st.enabled) {
      synthenv::GeneratorConfig g = c.generator;
      g.drift = eval::drift_ramp(st.indices, st.end_multiplier);
      const auto series = eval::run_staleness(g, st.setup);
      eval::write_staleness(out, series, ctx.header);
      summary["staleness"] = {{"indices", series.size()},
                              {"final_frozen_mean_z", rounded(series.back().frozen_mean_z)},
                              {"final_mbd_mean_rps", rounded(series.back().mbd_mean_rps)}};
    } else {
      std::vector<std::string> comments = ctx.header;
      comments.push_back("disabled");
      eval::write_staleness(out, {}, comments);
      summary["staleness"] = nullptr;
    }
  }

  summary["files"] = {artifacts::kTable1, artifacts::kTable2, artifacts::kTable3,
                      artifacts::kBucketFit, artifacts::kStaleness};
  std::ofstream out = ctx.create(artifacts::kSummary);
  out << summary.dump(2) << "\n";
}

}  // namespace

void run_stage(Stage stage, const ExperimentConfig& config, const RunOptions& options) {
  Context ctx{config, options.out_dir.empty() ? fs::path(config.output_dir) : fs::path(options.out_dir),
              options.log, {provenance(config)}};
  fs::create_directories(ctx.dir);
  switch (stage) {
    case Stage::kGenData:
      gen_data(ctx);
      break;
    case Stage::kTrainRanker:
      train_ranker(ctx);
      break;
    case Stage::kTrainMbd:
      train_mbd(ctx);
      break;
    case Stage::kRerank:
      run_rerank(ctx, options.candidates_path);
      break;
    case Stage::kReport:
      report(ctx);
      break;
    case Stage::kAll:
      gen_data(ctx);
      train_ranker(ctx);
      train_mbd(ctx);
      run_rerank(ctx, options.candidates_path);
      report(ctx);
      break;
  }
}

int run_cli(const std::string& config_path, std::optional<std::uint64_t> seed,
            const std::string& stage, const RunOptions& options, std::ostream& err) {
  try {
    const Stage s = stage_from_string(stage);
    const ExperimentConfig config = load_config(config_path, seed);
    run_stage(s, config, options);
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const MissingArtifact& e) {
    err << "error: " << e.what() << "\n";
    return kExitMissingArtifact;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace mbdlab::cli
