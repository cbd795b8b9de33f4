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

#ifndef MBDLAB_MBD_BRANCH_H_
#define MBDLAB_MBD_BRANCH_H_

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mbdlab/numerics/mlp.h"
#include "mbdlab/numerics/optimizer.h"
#include "mbdlab/numerics/param_store.h"
#include "mbdlab/numerics/tape.h"
#include "mbdlab/ranker/ranker.h"
#include "mbdlab/synthenv/dataset.h"

namespace mbdlab::mbd {

// ---------------------------------------------------------------------------
// Bias feature sets.

struct BiasFeatureSet {
  std::string name;
  std::vector<std::string> columns;  // in declared order

  // Nonempty, no duplicates, every column present. Throws std::invalid_argument
  // naming the first offending column.
  void validate(const FeatureSchema& schema) const;
};

// Column names for a group token. Known groups: user_full, item_full,
// user_region, item_length, item_views, item_format. Any other token must be
// a schema column and maps to itself.
std::vector<std::string> expand_group(const FeatureSchema& schema, const std::string& token);
// Expands each token in order, dropping repeats, then validates.
BiasFeatureSet make_bias_set(std::string name, const std::vector<std::string>& tokens,
                             const FeatureSchema& schema);

// Column indices of `set` within `schema`.
std::vector<std::size_t> resolve(const BiasFeatureSet& set, const FeatureSchema& schema);
// x' from a full feature vector, named columns in declared order.
std::vector<double> project(std::span<const double> x, const BiasFeatureSet& set,
                            const FeatureSchema& schema);

// ---------------------------------------------------------------------------
// Losses and target spaces.

inline constexpr double kProbabilityClamp = 1e-6;

// ln(p / (1 - p)) after clamping p to [1e-6, 1 - 1e-6]. Throws
// std::invalid_argument for p outside [0, 1] or NaN.
double logit_target(double p);

// Scalar forms of the per-example losses.
double mean_loss(double p, double mu);
double variance_loss(double p, double mu, double variance);
double pinball_loss(double p, double q, double tau);

// Tape forms used in training. `p` must already be detached.
numerics::Var mean_loss(numerics::Tape& tape, numerics::Var p, numerics::Var mu);
numerics::Var variance_loss(numerics::Tape& tape, numerics::Var p, numerics::Var mu,
                            numerics::Var variance);

// ---------------------------------------------------------------------------
// The branch.

enum class TargetMode { kPrediction, kLabel };
enum class Space { kLog1p, kProbability, kLogit };

std::string to_string(TargetMode mode);
std::string to_string(Space space);
TargetMode target_mode_from_string(const std::string& s);
Space space_from_string(const std::string& s);

struct BranchSpec {
  std::string task;  // ranker task name
  BiasFeatureSet features;
  std::vector<std::size_t> hidden = {32, 32};  // empty: linear heads on x'
  std::vector<double> quantiles;                // increasing levels in (0, 1)
  TargetMode target = TargetMode::kPrediction;
  Space space = Space::kLog1p;
  std::uint64_t seed = 11;
  double variance_floor = 1e-6;

  void validate() const;
};

struct DistributionEstimate {
  double mean = 0.0;
  double variance = 1.0;
  std::vector<std::pair<double, double>> quantiles;  // (tau, q_tau)

  double sigma() const;
};

// Per-row estimates, column-wise.
struct EstimateColumns {
  std::vector<double> mean;
  std::vector<double> variance;
  std::vector<std::vector<double>> quantiles;  // [level][row]
};

class MbdBranch {
 public:
  struct Heads {
    numerics::Var mean;
    numerics::Var variance;  // floored exp(raw)
    std::vector<numerics::Var> quantiles;
  };

  MbdBranch() = default;
  // Resolves the bias set against `schema` and copies the normalization
  // constants of the chosen columns.
  MbdBranch(BranchSpec spec, const FeatureSchema& schema);

  const BranchSpec& spec() const { return spec_; }
  const FeatureSchema& input_schema() const { return input_schema_; }
  numerics::ParamStore& params() { return store_; }
  const numerics::ParamStore& params() const { return store_; }

  // x' (raw units) from a full feature vector of the training schema.
  std::vector<double> project(std::span<const double> x) const;
  // Normalized x' rows, [rows.size() x |x'|].
  numerics::Matrix batch(const Dataset& data, std::span<const std::size_t> rows) const;
  numerics::Matrix batch_all(const Dataset& data) const;

  Heads forward(numerics::Tape& tape, numerics::Var xprime);
  Heads forward_frozen(numerics::Tape& tape, numerics::Var xprime) const;

  // From raw x'. Throws ShapeError on width mismatch.
  DistributionEstimate estimate(std::span<const double> xprime) const;
  EstimateColumns estimate_all(const Dataset& data) const;

  // Maps a ranker head output (regression value or binary logit) into this
  // branch's target space.
  double prediction_target(double head_output) const;
  double label_target(double label) const;

  // Parameter checkpoint with the descriptor in its metadata, plus `meta`.
  void save(const std::string& path, const std::map<std::string, std::string>& meta = {}) const;
  static MbdBranch load(const std::string& path);

 private:
  template <typename ParamFn>
  Heads run(numerics::Tape& tape, numerics::Var xprime, ParamFn&& param) const;
  void build(bool init);

  BranchSpec spec_;
  FeatureSchema full_schema_;   // the schema the branch projects from
  FeatureSchema input_schema_;  // x' columns with their normalization
  std::vector<std::size_t> columns_;
  numerics::ParamStore store_;
  numerics::Mlp trunk_;
  bool has_trunk_ = false;
  numerics::Mlp mean_head_;
  numerics::Mlp variance_head_;
  std::vector<numerics::Mlp> quantile_heads_;
};

// Records the auxiliary loss for one batch: mean over rows of
// mean_loss + variance_loss (+ pinball per quantile head). `target` is
// detached on entry.
numerics::Var auxiliary_loss(numerics::Tape& tape, const MbdBranch::Heads& heads,
                             numerics::Var target, const std::vector<double>& levels);

// ---------------------------------------------------------------------------
// Training.

struct FitOptions {
  std::size_t steps = 2000;
  std::size_t batch_size = 256;  // 0: full batch
  numerics::OptimizerConfig optimizer{numerics::OptimizerKind::kAdam, 3e-3};
  // Learning rate decays linearly to lr * final_lr_fraction at the last step.
  double final_lr_fraction = 1.0;
  std::uint64_t seed = 13;
};

struct FitReport {
  std::vector<double> loss;  // per step
  std::size_t skipped = 0;   // rows dropped for a non-finite target
  std::size_t steps = 0;
};

// Fits the branch to fixed targets. `xprime` holds normalized x' rows.
FitReport fit_branch(MbdBranch& branch, const numerics::Matrix& xprime,
                     std::span<const double> targets, const FitOptions& options);

// Targets for every row of `data` in the branch's space, from the ranker's
// prediction or the label per spec().target.
std::vector<double> branch_targets(const MbdBranch& branch, const ranker::RankerModel& ranker,
                                   const Dataset& data);

// Frozen mode: the ranker is only read.
FitReport train_branch(MbdBranch& branch, const ranker::RankerModel& ranker,
                       const Dataset& data, const FitOptions& options);

struct JointOptions {
  std::size_t steps = 1000;
  std::size_t batch_size = 256;
  bool ranker_loss = true;
  numerics::OptimizerConfig branch_optimizer{numerics::OptimizerKind::kAdam, 3e-3};
  std::uint64_t seed = 17;
};

struct JointReport {
  std::vector<double> ranker_loss;
  std::vector<double> aux_loss;
  std::size_t skipped = 0;
  // False if any step left a non-zero gradient on the ranker from the
  // auxiliary loss alone. Only tracked with ranker_loss disabled.
  bool ranker_grads_zero = true;
};

// Joint mode: one loop; the ranker steps on its own loss (if enabled) and the
// branch on the auxiliary loss against sg[p].
JointReport train_joint(ranker::RankerModel& ranker, numerics::Optimizer& ranker_optimizer,
                        MbdBranch& branch, const Dataset& data, const JointOptions& options);

// Rows whose quantile estimates are not non-decreasing in tau.
std::size_t count_quantile_crossings(const EstimateColumns& est);

}  // namespace mbdlab::mbd

#endif  // MBDLAB_MBD_BRANCH_H_
