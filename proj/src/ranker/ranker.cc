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

#include "mbdlab/ranker/ranker.h"

#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include "json.hpp"
#include "mbdlab/errors.h"
#include "mbdlab/numerics/checkpoint.h"

namespace mbdlab::ranker {

using numerics::Matrix;
using numerics::Mlp;
using numerics::MlpSpec;
using numerics::OutputActivation;
using numerics::Tape;
using numerics::Var;
using nlohmann::json;

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

void TaskSpec::validate() const {
  if (!is_known_label(name)) {
    throw ConfigError("task", "no label column for task '" + name + "'");
  }
  if (binary() && loss != LossKind::kBce) {
    throw ConfigError("task." + name, "binary tasks use binary cross-entropy");
  }
  if (!binary() && loss != LossKind::kSquaredError) {
    throw ConfigError("task." + name, "regression tasks use squared error");
  }
}

TaskSpec regression_task(std::string name) {
  return {std::move(name), TargetKind::kRegression, LabelTransform::kLog1p,
          LossKind::kSquaredError};
}

TaskSpec binary_task(std::string name) {
  return {std::move(name), TargetKind::kBinary, LabelTransform::kIdentity, LossKind::kBce};
}

std::vector<TaskSpec> default_tasks() {
  return {regression_task("watch_time"), binary_task("like"), binary_task("loop")};
}

double transform_label(const TaskSpec& task, double y) {
  return task.transform == LabelTransform::kLog1p ? std::log1p(y) : y;
}

RankerModel::RankerModel(FeatureSchema schema, std::vector<TaskSpec> tasks,
                         RankerConfig config)
    : schema_(std::move(schema)), tasks_(std::move(tasks)), config_(std::move(config)) {
  if (tasks_.empty()) throw ConfigError("tasks", "at least one task is required");
  for (const TaskSpec& t : tasks_) t.validate();
  store_.set_seed(config_.seed);
  build_layers(true);
}

void RankerModel::build_layers(bool init) {
  std::vector<std::size_t> trunk_widths{schema_.size()};
  trunk_widths.insert(trunk_widths.end(), config_.trunk.begin(), config_.trunk.end());
  MlpSpec trunk_spec{trunk_widths, OutputActivation::kIdentity, config_.seed};
  const std::size_t h = trunk_widths.back();
  trunk_ = init ? Mlp(trunk_spec, store_, "trunk") : Mlp::bind(trunk_spec, store_, "trunk");
  heads_.clear();
  for (std::size_t t = 0; t < tasks_.size(); ++t) {
    std::vector<std::size_t> w{h};
    w.insert(w.end(), config_.head_hidden.begin(), config_.head_hidden.end());
    w.push_back(1);
    MlpSpec spec{w, OutputActivation::kIdentity, config_.seed + 101 * (t + 1)};
    const std::string prefix = "head_" + tasks_[t].name;
    heads_.push_back(init ? Mlp(spec, store_, prefix) : Mlp::bind(spec, store_, prefix));
  }
}

std::size_t RankerModel::task_index(const std::string& name) const {
  for (std::size_t t = 0; t < tasks_.size(); ++t) {
    if (tasks_[t].name == name) return t;
  }
  throw std::invalid_argument("ranker has no task '" + name + "'");
}

std::vector<Var> RankerModel::forward(Tape& tape, Var x) {
  Var h = tape.relu(trunk_.forward(tape, store_, x));
  std::vector<Var> out;
  for (const Mlp& head : heads_) out.push_back(head.forward(tape, store_, h));
  return out;
}

std::vector<Var> RankerModel::forward_frozen(Tape& tape, Var x) const {
  Var h = tape.relu(trunk_.forward_frozen(tape, store_, x));
  std::vector<Var> out;
  for (const Mlp& head : heads_) out.push_back(head.forward_frozen(tape, store_, h));
  return out;
}

Var RankerModel::loss(Tape& tape, const std::vector<Var>& outputs,
                      const Matrix& labels) const {
  Var total;
  Var y_all = tape.constant(labels);
  for (std::size_t t = 0; t < tasks_.size(); ++t) {
    Var y = tape.column(y_all, t);
    Var l = tasks_[t].binary() ? tape.mean(tape.bce_with_logits(outputs[t], y))
                               : tape.mean(tape.square(outputs[t] - y));
    total = total.valid() ? total + l : l;
  }
  return total;
}

std::vector<TaskPrediction> RankerModel::predict(std::span<const double> x) const {
  if (x.size() != schema_.size()) {
    throw ShapeError("ranker expects " + std::to_string(schema_.size()) +
                     " features, got " + std::to_string(x.size()));
  }
  const std::vector<double> z = schema_.normalize(x);
  std::vector<double> h = trunk_.apply(store_, z);
  for (double& v : h) v = v > 0.0 ? v : 0.0;
  std::vector<TaskPrediction> out;
  for (std::size_t t = 0; t < tasks_.size(); ++t) {
    const double o = heads_[t].apply(store_, h)[0];
    out.push_back(tasks_[t].binary() ? TaskPrediction{sigmoid(o), o} : TaskPrediction{o, o});
  }
  return out;
}

std::vector<std::vector<double>> RankerModel::predict_outputs(const Dataset& data) const {
  std::vector<std::vector<double>> out(tasks_.size());
  for (auto& v : out) v.reserve(data.size());
  constexpr std::size_t kChunk = 4096;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    rows.clear();
    for (std::size_t i = start; i < std::min(data.size(), start + kChunk); ++i) rows.push_back(i);
    Tape tape;
    auto heads = forward_frozen(tape, tape.constant(batch_features(data, rows)));
    for (std::size_t t = 0; t < tasks_.size(); ++t) {
      auto v = heads[t].value();
      out[t].insert(out[t].end(), v.begin(), v.end());
    }
  }
  return out;
}

Matrix RankerModel::batch_features(const Dataset& data,
                                   std::span<const std::size_t> rows) const {
  Matrix m(rows.size(), schema_.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    schema_.normalize_into(data.rows[rows[i]].features, m.row(i));
  }
  return m;
}

Matrix RankerModel::batch_labels(const Dataset& data,
                                 std::span<const std::size_t> rows) const {
  Matrix m(rows.size(), tasks_.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t t = 0; t < tasks_.size(); ++t) {
      m(i, t) = transform_label(tasks_[t], label_value(data.rows[rows[i]], tasks_[t].name));
    }
  }
  return m;
}

void RankerModel::save(const std::string& path,
                       const std::map<std::string, std::string>& meta) const {
  std::map<std::string, std::string> ck_meta = meta;
  ck_meta["kind"] = "ranker";
  numerics::save_checkpoint(path, store_, ck_meta);
  json tasks = json::array();
  for (const TaskSpec& t : tasks_) {
    tasks.push_back({{"name", t.name}, {"kind", t.binary() ? "binary" : "regression"}});
  }
  json side{{"features", schema_to_json(schema_)},
            {"tasks", tasks},
            {"trunk", config_.trunk},
            {"head_hidden", config_.head_hidden},
            {"seed", config_.seed}};
  if (!meta.empty()) side["provenance"] = meta;
  std::ofstream out(path + ".schema.json");
  if (!out) throw std::runtime_error("cannot write '" + path + ".schema.json'");
  // Doubles are printed round-trip exact by the json library.
  out << side.dump(2) << "\n";
}

RankerModel RankerModel::load(const std::string& path) {
  std::ifstream in(path + ".schema.json");
  if (!in) throw std::runtime_error("cannot read '" + path + ".schema.json'");
  json side = json::parse(in);
  RankerModel m;
  m.schema_ = schema_from_json(side.at("features"));
  for (const json& t : side.at("tasks")) {
    const std::string name = t.at("name").get<std::string>();
    m.tasks_.push_back(t.at("kind") == "binary" ? binary_task(name) : regression_task(name));
  }
  m.config_.trunk = side.at("trunk").get<std::vector<std::size_t>>();
  m.config_.head_hidden = side.at("head_hidden").get<std::vector<std::size_t>>();
  m.config_.seed = side.at("seed").get<std::uint64_t>();
  m.store_ = numerics::load_checkpoint(path).params;
  m.build_layers(false);
  return m;
}

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  std::mt19937_64 rng(seed);
  // Plain modulo keeps the sequence identical across standard libraries.
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng() % i]);
  return p;
}

TrainReport train(RankerModel& model, const Dataset& data, numerics::Optimizer& optimizer,
                  const TrainOptions& options) {
  if (data.empty()) throw std::invalid_argument("cannot train a ranker on an empty dataset");
  if (options.batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  model.schema().check_width(data.rows.front().features);
  TrainReport report;
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    if (options.shuffle) order = permutation(data.size(), options.seed * 1000003ULL + epoch);
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      std::span<const std::size_t> rows(order.data() + start, end - start);
      Tape tape;
      auto outputs = model.forward(tape, tape.constant(model.batch_features(data, rows)));
      Var l = model.loss(tape, outputs, model.batch_labels(data, rows));
      const double value = l.scalar();
      if (!std::isfinite(value)) {
        std::string where;
        if (!options.diagnostic_path.empty()) {
          numerics::save_checkpoint(options.diagnostic_path, model.params(),
                                    {{"kind", "ranker-diagnostic"},
                                     {"epoch", std::to_string(epoch)},
                                     {"step", std::to_string(report.steps)}});
          where = "; parameters saved to " + options.diagnostic_path;
        }
        throw NumericalError("ranker loss is non-finite at epoch " + std::to_string(epoch) +
                             ", step " + std::to_string(report.steps) + where);
      }
      model.params().zero_grad();
      tape.backward(l);
      optimizer.step(model.params());
      sum += value;
      ++batches;
      ++report.steps;
    }
    report.epoch_loss.push_back(sum / static_cast<double>(batches));
  }
  return report;
}

}  // namespace mbdlab::ranker
