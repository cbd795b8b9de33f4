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

#ifndef MBDLAB_EVAL_EXPERIMENTS_H_
#define MBDLAB_EVAL_EXPERIMENTS_H_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mbdlab/eval/metrics.h"
#include "mbdlab/mbd/branch.h"
#include "mbdlab/numerics/optimizer.h"
#include "mbdlab/ranker/ranker.h"
#include "mbdlab/signals/signals.h"
#include "mbdlab/synthenv/generator.h"

namespace mbdlab::eval {

inline constexpr const char* kDurationColumn = "item_duration";

// Per-row view of one task: ranker output mapped into the branch's space,
// the label in that space, and the branch estimates.
struct TaskScores {
  std::vector<double> head;   // raw head output (log1p value or logit)
  std::vector<double> p;      // branch space
  std::vector<double> label;  // branch space
  mbd::EstimateColumns est;
};

TaskScores score_task(const Dataset& data, const ranker::RankerModel& ranker,
                      const mbd::MbdBranch& branch);

// ---------------------------------------------------------------------------
// Signal quality: bias, NLL against a coarse cluster baseline, alignment.

struct ClusterOptions {
  std::string attribute = kDurationColumn;
  double lo = 2.0;
  double hi = 600.0;
  std::size_t nll_buckets = 3;
  std::size_t alignment_buckets = 10;
};

struct SignalQuality {
  std::string branch;  // bias feature set name
  std::string task;
  std::string space;
  std::size_t count = 0;
  std::optional<double> bias_ranker;  // mean(p - y), ranker output space
  std::optional<double> bias_mbd;     // mean(p - mu), branch space
  std::optional<double> nll_cluster;
  std::optional<double> nll_mbd;
  std::optional<double> rho_trend;        // rho(p, mu) over rows
  std::optional<double> rho_uncertainty;  // rho(sigma_mbd, sigma_cluster) over buckets
  std::size_t alignment_points = 0;
};

// Cluster statistics come from `train` labels; everything else from `test`.
SignalQuality signal_quality(const Dataset& train, const Dataset& test,
                             const ranker::RankerModel& ranker, const mbd::MbdBranch& branch,
                             const ClusterOptions& options = {});

// ---------------------------------------------------------------------------
// Correlation of each signal with duration.

struct CorrelationOptions {
  bool video_only = true;
  std::vector<double> edges = signals::log_edges(2.0, 600.0, 10);
  // Apply the p95 indicator to the predicted (true) or realized watch time.
  bool vvp_on_prediction = true;
  double nts_c = 0.05;
  double nts_pskip = 0.0;
};

struct CorrelationRow {
  std::string task;
  std::string signal;
  std::optional<double> rho;
  std::size_t count = 0;
};

// watch_time: y, log_y, p, vvp95, vvp95_x_nts, rps. loop: y, p, rps.
// The VVP95 table and the per-item averages come from `train`.
std::vector<CorrelationRow> debias_correlation_report(const Dataset& train, const Dataset& test,
                                                      const ranker::RankerModel& ranker,
                                                      const mbd::MbdBranch& watch_branch,
                                                      const mbd::MbdBranch& loop_branch,
                                                      const CorrelationOptions& options = {});

// ---------------------------------------------------------------------------
// Per-bucket curves.

struct BucketFit {
  std::string label;
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  std::optional<double> mean_p;
  std::optional<double> var_p;
  std::optional<double> mean_mu;
  std::optional<double> mean_var;
  bool empty() const { return count == 0; }
};

std::vector<BucketFit> distribution_fit_by_bucket(const Dataset& data,
                                                  const ranker::RankerModel& ranker,
                                                  const mbd::MbdBranch& branch,
                                                  const std::vector<double>& edges,
                                                  const std::string& attribute = kDurationColumn);

// ---------------------------------------------------------------------------
// Slate simulation for the efficiency analysis.

struct SlateOptions {
  std::size_t slate_size = 50;
  std::size_t top_k = 10;
  // Length buckets in seconds; labels[k] names [edges[k], edges[k+1]).
  std::vector<double> edges = {0, 5, 10, 15, 30, 45, 60, 90, 180, 300, 600, 1800, 3600, 1e300};
  std::vector<std::string> labels = {"0-5s",   "5-10s",  "10-15s", "15-30s", "30-45s",
                                     "45-60s", "60-90s", "90-180s", "3-5m",  "5-10m",
                                     "10-30m", "30-60m", "60m+"};
};

// Consecutive rows form slates; each arm keeps its top_k by score (ties to
// the lower row index). Views and realized watch time are tallied per length
// bucket and compared.
std::vector<EfficiencyRow> slate_efficiency(const Dataset& candidates,
                                            const std::vector<double>& control_score,
                                            const std::vector<double>& treatment_score,
                                            const SlateOptions& options = {});

// ---------------------------------------------------------------------------
// Oracles.

// The branch's x' values of one row, as a conditioning context.
synthenv::BiasContext context_of(const mbd::MbdBranch& branch, const FeatureSchema& schema,
                                 const Interaction& row);

// Monte Carlo moments of the ranker's prediction (in the branch's space)
// given the context.
synthenv::MomentEstimate oracle_prediction_moments(const synthenv::GeneratorConfig& config,
                                                   const ranker::RankerModel& ranker,
                                                   const mbd::MbdBranch& branch,
                                                   const synthenv::BiasContext& context,
                                                   std::size_t n_mc, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Staleness under drift.

inline mbd::FitOptions default_catchup() {
  mbd::FitOptions o;
  o.steps = 300;
  o.batch_size = 1024;
  o.final_lr_fraction = 0.05;
  return o;
}

struct StalenessOptions {
  std::size_t steps_per_index = 200;
  std::size_t batch_size = 256;
  // Branch-only fit against the updated ranker after each joint pass, over
  // the training rows of the last catchup_window indices (features do not
  // drift, and targets are recomputed from the current ranker). Zero steps
  // skips it.
  mbd::FitOptions catchup = default_catchup();
  std::size_t catchup_window = 5;
  // Every holdout_stride-th row of an index is scored, the rest train.
  std::size_t holdout_stride = 2;
  std::uint64_t seed = 23;
};

struct StalenessPoint {
  std::uint32_t index = 0;
  std::optional<double> frozen_mean_z;
  std::optional<double> mbd_mean_rps;
  std::size_t count = 0;
};

// For each timestamp index in `drifting`, the training rows retrain the ranker
// and branch jointly, then the branch alone (skipped at index 0, which the
// models are assumed fitted to). The held-out rows are scored by the frozen
// table's z-correction and by the branch's RPS.
std::vector<StalenessPoint> staleness_experiment(const Dataset& drifting,
                                                 const signals::BucketTable& snapshot,
                                                 ranker::RankerModel& ranker,
                                                 numerics::Optimizer& ranker_optimizer,
                                                 mbd::MbdBranch& branch,
                                                 const StalenessOptions& options = {});

inline mbd::FitOptions default_warmup_fit() {
  mbd::FitOptions o;
  o.steps = 1500;
  o.final_lr_fraction = 0.05;
  return o;
}

struct StalenessSetup {
  std::size_t rows_per_index = 4000;
  std::size_t warmup_rows = 40000;  // stationary data at the first multiplier
  std::size_t ranker_epochs = 8;
  double incremental_lr = 3e-4;  // ranker learning rate after warm-up
  std::vector<std::string> bias_tokens = {"user_full", "item_length", "item_format"};
  mbd::FitOptions branch_fit = default_warmup_fit();
  std::vector<double> edges = signals::log_edges(2.0, 600.0, 10);
  StalenessOptions options;
};

// Builds the whole experiment from a generator config whose drift vector is
// the schedule: warm-up training, snapshot, then the per-index loop.
std::vector<StalenessPoint> run_staleness(const synthenv::GeneratorConfig& config,
                                          const StalenessSetup& setup);

// A linear ramp from 1 to `end` over `n` indices.
std::vector<double> drift_ramp(std::size_t n, double end);

// ---------------------------------------------------------------------------
// Writers. Each emits optional "# " comment lines, a header and one row per
// entry with numbers at four decimals.

void write_signal_quality(std::ostream& out, const std::vector<SignalQuality>& rows,
                          const std::vector<std::string>& comments = {});
void write_correlation(std::ostream& out, const std::vector<CorrelationRow>& rows,
                       const std::vector<std::string>& comments = {});
// `source` is "published" or "synthetic"; `reproduced` only for published.
struct EfficiencyReportRow {
  std::string source;
  EfficiencyRow row;
  std::optional<bool> reproduced;
};
void write_efficiency(std::ostream& out, const std::vector<EfficiencyReportRow>& rows,
                      const std::vector<std::string>& comments = {});
void write_bucket_fit(std::ostream& out, const std::string& task,
                      const std::vector<BucketFit>& rows,
                      const std::vector<std::string>& comments = {}, bool header = true);
void write_staleness(std::ostream& out, const std::vector<StalenessPoint>& rows,
                     const std::vector<std::string>& comments = {});

// Published efficiency rows with their computed ratios and reproduction flag.
std::vector<EfficiencyReportRow> published_efficiency_report();

}  // namespace mbdlab::eval

#endif  // MBDLAB_EVAL_EXPERIMENTS_H_
