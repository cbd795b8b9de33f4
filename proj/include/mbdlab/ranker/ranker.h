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

#ifndef MBDLAB_RANKER_RANKER_H_
#define MBDLAB_RANKER_RANKER_H_

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mbdlab/numerics/mlp.h"
#include "mbdlab/numerics/optimizer.h"
#include "mbdlab/numerics/param_store.h"
#include "mbdlab/numerics/tape.h"
#include "mbdlab/synthenv/dataset.h"

namespace mbdlab::ranker {

enum class TargetKind { kRegression, kBinary };
enum class LabelTransform { kIdentity, kLog1p };
enum class LossKind { kSquaredError, kBce };

struct TaskSpec {
  std::string name;  // also the label column: watch_time, like or loop
  TargetKind kind = TargetKind::kRegression;
  LabelTransform transform = LabelTransform::kLog1p;
  LossKind loss = LossKind::kSquaredError;

  // Binary tasks need BCE; regression tasks need squared error.
  void validate() const;
  bool binary() const { return kind == TargetKind::kBinary; }
};

TaskSpec regression_task(std::string name);
TaskSpec binary_task(std::string name);
// watch_time (log1p regression), like, loop.
std::vector<TaskSpec> default_tasks();

double transform_label(const TaskSpec& task, double y);

struct RankerConfig {
  std::vector<std::size_t> trunk = {64, 64};
  std::vector<std::size_t> head_hidden = {32};
  std::uint64_t seed = 1;
};

// Output of one head. Regression: value is in the transformed (log1p) space
// and logit == value. Binary: value = sigmoid(logit).
struct TaskPrediction {
  double value = 0.0;
  double logit = 0.0;
};

class RankerModel {
 public:
  RankerModel() = default;
  // `schema` should already carry normalization constants; without them
  // inputs are fed raw.
  RankerModel(FeatureSchema schema, std::vector<TaskSpec> tasks, RankerConfig config);

  const FeatureSchema& schema() const { return schema_; }
  const std::vector<TaskSpec>& tasks() const { return tasks_; }
  const RankerConfig& config() const { return config_; }
  std::size_t task_index(const std::string& name) const;

  numerics::ParamStore& params() { return store_; }
  const numerics::ParamStore& params() const { return store_; }

  // One raw (un-normalized) feature vector. Throws ShapeError on width
  // mismatch.
  std::vector<TaskPrediction> predict(std::span<const double> x) const;
  // Head outputs for every row: result[t][i] is the regression value or the
  // binary logit of task t on row i.
  std::vector<std::vector<double>> predict_outputs(const Dataset& data) const;

  // Normalized feature rows, ready for the tape.
  numerics::Matrix batch_features(const Dataset& data,
                                  std::span<const std::size_t> rows) const;
  // Transformed labels, [rows x tasks].
  numerics::Matrix batch_labels(const Dataset& data,
                                std::span<const std::size_t> rows) const;

  // Records the forward pass over a normalized batch; one [b x 1] output per
  // task (regression value or binary logit).
  std::vector<numerics::Var> forward(numerics::Tape& tape, numerics::Var x);
  std::vector<numerics::Var> forward_frozen(numerics::Tape& tape, numerics::Var x) const;
  // Sum over tasks of each task's mean loss.
  numerics::Var loss(numerics::Tape& tape, const std::vector<numerics::Var>& outputs,
                     const numerics::Matrix& labels) const;

  // Writes the parameter checkpoint plus "<path>.schema.json". `meta` is
  // copied into both (under "provenance" in the JSON).
  void save(const std::string& path, const std::map<std::string, std::string>& meta = {}) const;
  static RankerModel load(const std::string& path);

 private:
  void build_layers(bool init);

  FeatureSchema schema_;
  std::vector<TaskSpec> tasks_;
  RankerConfig config_;
  numerics::ParamStore store_;
  numerics::Mlp trunk_;
  std::vector<numerics::Mlp> heads_;
};

struct TrainOptions {
  std::size_t epochs = 8;
  std::size_t batch_size = 256;
  bool shuffle = true;
  std::uint64_t seed = 7;
  // Written if the loss goes non-finite. Empty: no file.
  std::string diagnostic_path;
};

struct TrainReport {
  std::vector<double> epoch_loss;  // mean batch loss per epoch
  std::size_t steps = 0;
};

// Epoch-based mini-batch training. With shuffle, each epoch permutes the rows
// with a generator seeded from (options.seed, epoch); without it rows are
// visited in file order. Throws NumericalError on a non-finite loss.
TrainReport train(RankerModel& model, const Dataset& data, numerics::Optimizer& optimizer,
                  const TrainOptions& options);

// Deterministic Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed);

double sigmoid(double x);
double logit(double p);

}  // namespace mbdlab::ranker

#endif  // MBDLAB_RANKER_RANKER_H_
