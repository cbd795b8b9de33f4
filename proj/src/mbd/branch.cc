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

#include "mbdlab/mbd/branch.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <stdexcept>

#include "json.hpp"
#include "mbdlab/errors.h"
#include "mbdlab/numerics/checkpoint.h"

namespace mbdlab::mbd {

using numerics::Matrix;
using numerics::Mlp;
using numerics::MlpSpec;
using numerics::OutputActivation;
using numerics::Tape;
using numerics::Var;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Bias feature sets.

void BiasFeatureSet::validate(const FeatureSchema& schema) const {
  if (columns.empty()) {
    throw std::invalid_argument("bias feature set '" + name + "' is empty");
  }
  std::set<std::string> seen;
  for (const std::string& c : columns) {
    if (!schema.find(c)) {
      throw std::invalid_argument("bias feature set '" + name + "': unknown column '" + c + "'");
    }
    if (!seen.insert(c).second) {
      throw std::invalid_argument("bias feature set '" + name + "': duplicate column '" + c +
                                  "'");
    }
  }
}

std::vector<std::string> expand_group(const FeatureSchema& schema, const std::string& token) {
  auto with_prefix = [&](const std::string& prefix) {
    std::vector<std::string> out;
    for (const std::string& n : schema.names) {
      if (n.rfind(prefix, 0) == 0) out.push_back(n);
    }
    return out;
  };
  if (token == "user_full") return with_prefix("user_");
  if (token == "item_full") return with_prefix("item_");
  if (token == "user_region") return {"user_region_a", "user_region_b"};
  if (token == "item_length") return {"item_log_duration"};
  if (token == "item_views") return {"item_log_views"};
  if (token == "item_format") return {"item_format_photo", "item_format_video"};
  return {token};
}

BiasFeatureSet make_bias_set(std::string name, const std::vector<std::string>& tokens,
                             const FeatureSchema& schema) {
  BiasFeatureSet set{std::move(name), {}};
  for (const std::string& t : tokens) {
    for (std::string& c : expand_group(schema, t)) {
      if (std::find(set.columns.begin(), set.columns.end(), c) == set.columns.end()) {
        set.columns.push_back(std::move(c));
      }
    }
  }
  set.validate(schema);
  return set;
}

std::vector<std::size_t> resolve(const BiasFeatureSet& set, const FeatureSchema& schema) {
  set.validate(schema);
  std::vector<std::size_t> idx;
  for (const std::string& c : set.columns) idx.push_back(schema.index_of(c));
  return idx;
}

std::vector<double> project(std::span<const double> x, const BiasFeatureSet& set,
                            const FeatureSchema& schema) {
  schema.check_width(x);
  std::vector<double> out;
  for (std::size_t i : resolve(set, schema)) out.push_back(x[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Losses.

double logit_target(double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::invalid_argument("logit_target needs p in [0, 1], got " + std::to_string(p));
  }
  const double c = std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
  return std::log(c / (1.0 - c));
}

double mean_loss(double p, double mu) { return (p - mu) * (p - mu); }

double variance_loss(double p, double mu, double variance) {
  const double r2 = (p - mu) * (p - mu);
  return (variance - r2) * (variance - r2);
}

double pinball_loss(double p, double q, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw std::invalid_argument("pinball level must lie in (0, 1)");
  }
  return (tau - (p < q ? 1.0 : 0.0)) * (p - q);
}

Var mean_loss(Tape& tape, Var p, Var mu) { return tape.square(p - mu); }

Var variance_loss(Tape& tape, Var p, Var mu, Var variance) {
  Var r2 = tape.stop_gradient(tape.square(p - tape.stop_gradient(mu)));
  return tape.square(variance - r2);
}

Var auxiliary_loss(Tape& tape, const MbdBranch::Heads& heads, Var target,
                   const std::vector<double>& levels) {
  Var p = tape.stop_gradient(target);
  Var total = tape.mean(mean_loss(tape, p, heads.mean)) +
              tape.mean(variance_loss(tape, p, heads.mean, heads.variance));
  for (std::size_t k = 0; k < levels.size(); ++k) {
    total = total + tape.mean(tape.pinball(p, heads.quantiles[k], levels[k]));
  }
  return total;
}

// ---------------------------------------------------------------------------
// Tags.

std::string to_string(TargetMode mode) {
  return mode == TargetMode::kPrediction ? "prediction" : "label";
}

std::string to_string(Space space) {
  switch (space) {
    case Space::kLog1p:
      return "log1p";
    case Space::kProbability:
      return "probability";
    case Space::kLogit:
      return "logit";
  }
  return "";
}

TargetMode target_mode_from_string(const std::string& s) {
  if (s == "prediction") return TargetMode::kPrediction;
  if (s == "label") return TargetMode::kLabel;
  throw std::invalid_argument("unknown target mode '" + s + "'");
}

Space space_from_string(const std::string& s) {
  if (s == "log1p") return Space::kLog1p;
  if (s == "probability") return Space::kProbability;
  if (s == "logit") return Space::kLogit;
  throw std::invalid_argument("unknown space '" + s + "'");
}

void BranchSpec::validate() const {
  if (task.empty()) throw std::invalid_argument("branch needs a task");
  for (std::size_t h : hidden) {
    if (h == 0) throw std::invalid_argument("branch hidden widths must be >= 1");
  }
  for (double tau : quantiles) {
    if (!(tau > 0.0 && tau < 1.0)) {
      throw std::invalid_argument("quantile levels must lie in (0, 1)");
    }
  }
  if (!std::is_sorted(quantiles.begin(), quantiles.end()) ||
      std::adjacent_find(quantiles.begin(), quantiles.end()) != quantiles.end()) {
    throw std::invalid_argument("quantile levels must be strictly increasing");
  }
  if (!(variance_floor > 0.0)) throw std::invalid_argument("variance floor must be > 0");
}

double DistributionEstimate::sigma() const { return std::sqrt(variance); }

// ---------------------------------------------------------------------------
// MbdBranch.

MbdBranch::MbdBranch(BranchSpec spec, const FeatureSchema& schema)
    : spec_(std::move(spec)), full_schema_(schema) {
  spec_.validate();
  build(true);
}

void MbdBranch::build(bool init) {
  columns_ = resolve(spec_.features, full_schema_);
  input_schema_ = FeatureSchema{};
  for (std::size_t c : columns_) {
    input_schema_.names.push_back(full_schema_.names[c]);
    input_schema_.continuous.push_back(full_schema_.continuous[c]);
    if (full_schema_.has_normalization()) {
      input_schema_.mean.push_back(full_schema_.mean[c]);
      input_schema_.scale.push_back(full_schema_.scale[c]);
    }
  }
  store_.set_seed(spec_.seed);
  auto make = [&](MlpSpec s, const std::string& prefix) {
    return init ? Mlp(std::move(s), store_, prefix) : Mlp::bind(std::move(s), store_, prefix);
  };
  std::size_t width = columns_.size();
  has_trunk_ = !spec_.hidden.empty();
  if (has_trunk_) {
    std::vector<std::size_t> w{width};
    w.insert(w.end(), spec_.hidden.begin(), spec_.hidden.end());
    trunk_ = make({w, OutputActivation::kIdentity, spec_.seed}, "trunk");
    width = spec_.hidden.back();
  }
  mean_head_ = make({{width, 1}, OutputActivation::kIdentity, spec_.seed + 1}, "mean");
  variance_head_ = make({{width, 1}, OutputActivation::kIdentity, spec_.seed + 2}, "raw_variance");
  quantile_heads_.clear();
  for (std::size_t k = 0; k < spec_.quantiles.size(); ++k) {
    quantile_heads_.push_back(make({{width, 1}, OutputActivation::kIdentity, spec_.seed + 3 + k},
                                   "quantile" + std::to_string(k)));
  }
}

std::vector<double> MbdBranch::project(std::span<const double> x) const {
  full_schema_.check_width(x);
  std::vector<double> out;
  out.reserve(columns_.size());
  for (std::size_t c : columns_) out.push_back(x[c]);
  return out;
}

Matrix MbdBranch::batch(const Dataset& data, std::span<const std::size_t> rows) const {
  Matrix m(rows.size(), columns_.size());
  std::vector<double> xp(columns_.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::vector<double>& x = data.rows[rows[i]].features;
    full_schema_.check_width(x);
    for (std::size_t j = 0; j < columns_.size(); ++j) xp[j] = x[columns_[j]];
    input_schema_.normalize_into(xp, m.row(i));
  }
  return m;
}

Matrix MbdBranch::batch_all(const Dataset& data) const {
  std::vector<std::size_t> rows(data.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return batch(data, rows);
}

template <typename ParamFn>
MbdBranch::Heads MbdBranch::run(Tape& tape, Var xprime, ParamFn&& forward) const {
  Var h = has_trunk_ ? tape.relu(forward(trunk_, xprime)) : xprime;
  Heads out;
  out.mean = forward(mean_head_, h);
  out.variance = tape.clamp_min(tape.exp(forward(variance_head_, h)), spec_.variance_floor);
  for (const Mlp& q : quantile_heads_) out.quantiles.push_back(forward(q, h));
  return out;
}

MbdBranch::Heads MbdBranch::forward(Tape& tape, Var xprime) {
  return run(tape, xprime,
             [&](const Mlp& m, Var in) { return m.forward(tape, store_, in); });
}

MbdBranch::Heads MbdBranch::forward_frozen(Tape& tape, Var xprime) const {
  return run(tape, xprime,
             [&](const Mlp& m, Var in) { return m.forward_frozen(tape, store_, in); });
}

DistributionEstimate MbdBranch::estimate(std::span<const double> xprime) const {
  input_schema_.check_width(xprime);
  Tape tape;
  Heads h = forward_frozen(tape, tape.constant({1, xprime.size()}, input_schema_.normalize(xprime)));
  DistributionEstimate e;
  e.mean = h.mean.scalar();
  e.variance = h.variance.scalar();
  for (std::size_t k = 0; k < h.quantiles.size(); ++k) {
    e.quantiles.emplace_back(spec_.quantiles[k], h.quantiles[k].scalar());
  }
  return e;
}

EstimateColumns MbdBranch::estimate_all(const Dataset& data) const {
  EstimateColumns out;
  out.quantiles.resize(spec_.quantiles.size());
  constexpr std::size_t kChunk = 4096;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    rows.clear();
    for (std::size_t i = start; i < std::min(data.size(), start + kChunk); ++i) rows.push_back(i);
    Tape tape;
    Heads h = forward_frozen(tape, tape.constant(batch(data, rows)));
    auto append = [](std::vector<double>& dst, Var v) {
      auto s = v.value();
      dst.insert(dst.end(), s.begin(), s.end());
    };
    append(out.mean, h.mean);
    append(out.variance, h.variance);
    for (std::size_t k = 0; k < h.quantiles.size(); ++k) append(out.quantiles[k], h.quantiles[k]);
  }
  return out;
}

double MbdBranch::prediction_target(double head_output) const {
  switch (spec_.space) {
    case Space::kLog1p:
      return head_output;
    case Space::kProbability:
      return ranker::sigmoid(head_output);
    case Space::kLogit:
      return logit_target(ranker::sigmoid(head_output));
  }
  return head_output;
}

double MbdBranch::label_target(double label) const {
  switch (spec_.space) {
    case Space::kLog1p:
      return std::log1p(label);
    case Space::kProbability:
      return label;
    case Space::kLogit:
      return logit_target(label);
  }
  return label;
}

void MbdBranch::save(const std::string& path,
                     const std::map<std::string, std::string>& meta) const {
  json d{{"task", spec_.task},
         {"bias_set", spec_.features.name},
         {"columns", spec_.features.columns},
         {"hidden", spec_.hidden},
         {"quantiles", spec_.quantiles},
         {"target", to_string(spec_.target)},
         {"space", to_string(spec_.space)},
         {"seed", spec_.seed},
         {"variance_floor", spec_.variance_floor},
         {"schema", schema_to_json(full_schema_)}};
  std::map<std::string, std::string> ck_meta = meta;
  ck_meta["kind"] = "mbd-branch";
  ck_meta["space"] = to_string(spec_.space);
  ck_meta["descriptor"] = d.dump();
  numerics::save_checkpoint(path, store_, ck_meta);
}

MbdBranch MbdBranch::load(const std::string& path) {
  numerics::Checkpoint ck = numerics::load_checkpoint(path);
  auto it = ck.meta.find("descriptor");
  if (it == ck.meta.end()) {
    throw std::runtime_error("'" + path + "' is not a branch checkpoint (no descriptor)");
  }
  json d = json::parse(it->second);
  MbdBranch b;
  b.spec_.task = d.at("task").get<std::string>();
  b.spec_.features.name = d.at("bias_set").get<std::string>();
  b.spec_.features.columns = d.at("columns").get<std::vector<std::string>>();
  b.spec_.hidden = d.at("hidden").get<std::vector<std::size_t>>();
  b.spec_.quantiles = d.at("quantiles").get<std::vector<double>>();
  b.spec_.target = target_mode_from_string(d.at("target").get<std::string>());
  b.spec_.space = space_from_string(d.at("space").get<std::string>());
  b.spec_.seed = d.at("seed").get<std::uint64_t>();
  b.spec_.variance_floor = d.at("variance_floor").get<double>();
  b.full_schema_ = schema_from_json(d.at("schema"));
  b.store_ = std::move(ck.params);
  b.build(false);
  return b;
}

// ---------------------------------------------------------------------------
// Training.

namespace {

Matrix take_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), m.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(m.row(rows[i]).begin(), m.row(rows[i]).end(), out.row(i).begin());
  }
  return out;
}

}  // namespace

FitReport fit_branch(MbdBranch& branch, const Matrix& xprime, std::span<const double> targets,
                     const FitOptions& options) {
  if (xprime.rows != targets.size()) {
    throw ShapeError("fit_branch: " + std::to_string(xprime.rows) + " rows but " +
                     std::to_string(targets.size()) + " targets");
  }
  if (xprime.cols != branch.input_schema().size()) {
    throw ShapeError("fit_branch: x' has " + std::to_string(xprime.cols) +
                     " columns, branch expects " + std::to_string(branch.input_schema().size()));
  }
  FitReport report;
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (std::isfinite(targets[i])) {
      usable.push_back(i);
    } else {
      ++report.skipped;
    }
  }
  if (usable.empty()) throw std::invalid_argument("fit_branch: no finite targets");

  numerics::Optimizer opt(options.optimizer, branch.params());
  const double lr0 = options.optimizer.learning_rate;
  const bool full = options.batch_size == 0 || options.batch_size >= usable.size();
  const Matrix full_x = full ? take_rows(xprime, usable) : Matrix{};
  Matrix full_y;
  if (full) {
    full_y = Matrix(usable.size(), 1);
    for (std::size_t i = 0; i < usable.size(); ++i) full_y.data[i] = targets[usable[i]];
  }
  std::vector<std::size_t> order;
  std::size_t cursor = 0, epoch = 0;
  for (std::size_t step = 0; step < options.steps; ++step) {
    if (options.steps > 1 && options.final_lr_fraction != 1.0) {
      const double frac = static_cast<double>(step) / static_cast<double>(options.steps - 1);
      opt.set_learning_rate(lr0 * (1.0 - (1.0 - options.final_lr_fraction) * frac));
    }
    Tape tape;
    Var x, y;
    if (full) {
      x = tape.constant(full_x);
      y = tape.constant(full_y);
    } else {
      if (cursor + options.batch_size > order.size()) {
        const auto perm = ranker::permutation(usable.size(), options.seed * 7919ULL + epoch++);
        order.resize(perm.size());
        for (std::size_t i = 0; i < perm.size(); ++i) order[i] = usable[perm[i]];
        cursor = 0;
      }
      std::span<const std::size_t> rows(order.data() + cursor, options.batch_size);
      cursor += options.batch_size;
      Matrix yb(rows.size(), 1);
      for (std::size_t i = 0; i < rows.size(); ++i) yb.data[i] = targets[rows[i]];
      x = tape.constant(take_rows(xprime, rows));
      y = tape.constant(yb);
    }
    MbdBranch::Heads h = branch.forward(tape, x);
    Var loss = auxiliary_loss(tape, h, y, branch.spec().quantiles);
    if (!std::isfinite(loss.scalar())) {
      throw NumericalError("branch loss is non-finite at step " + std::to_string(step));
    }
    branch.params().zero_grad();
    tape.backward(loss);
    opt.step(branch.params());
    report.loss.push_back(loss.scalar());
    ++report.steps;
  }
  return report;
}

std::vector<double> branch_targets(const MbdBranch& branch, const ranker::RankerModel& ranker,
                                   const Dataset& data) {
  std::vector<double> out;
  out.reserve(data.size());
  if (branch.spec().target == TargetMode::kLabel) {
    for (const Interaction& r : data.rows) {
      out.push_back(branch.label_target(label_value(r, branch.spec().task)));
    }
    return out;
  }
  const std::size_t t = ranker.task_index(branch.spec().task);
  const std::vector<double> heads = ranker.predict_outputs(data)[t];
  for (double o : heads) {
    out.push_back(std::isfinite(o) ? branch.prediction_target(o)
                                   : std::numeric_limits<double>::quiet_NaN());
  }
  return out;
}

FitReport train_branch(MbdBranch& branch, const ranker::RankerModel& ranker, const Dataset& data,
                       const FitOptions& options) {
  return fit_branch(branch, branch.batch_all(data), branch_targets(branch, ranker, data), options);
}

JointReport train_joint(ranker::RankerModel& ranker, numerics::Optimizer& ranker_optimizer,
                        MbdBranch& branch, const Dataset& data, const JointOptions& options) {
  if (data.empty()) throw std::invalid_argument("train_joint: empty dataset");
  const std::size_t t = ranker.task_index(branch.spec().task);
  const std::size_t bs = std::min(options.batch_size, data.size());
  numerics::Optimizer branch_opt(options.branch_optimizer, branch.params());
  JointReport report;
  std::vector<std::size_t> order;
  std::size_t cursor = 0, epoch = 0;
  for (std::size_t step = 0; step < options.steps; ++step) {
    if (cursor + bs > order.size()) {
      order = ranker::permutation(data.size(), options.seed * 104729ULL + epoch++);
      cursor = 0;
    }
    std::span<const std::size_t> rows(order.data() + cursor, bs);
    cursor += bs;

    Tape tape;
    auto outputs = ranker.forward(tape, tape.constant(ranker.batch_features(data, rows)));
    // The head output enters the branch only as a detached constant in the
    // branch's target space.
    Var p = tape.stop_gradient(outputs[t]);
    std::vector<double> target_rows;
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double y = branch.spec().target == TargetMode::kLabel
                           ? branch.label_target(label_value(data.rows[rows[i]], branch.spec().task))
                           : branch.prediction_target(p.value()[i]);
      if (std::isfinite(y)) {
        target_rows.push_back(y);
        keep.push_back(rows[i]);
      } else {
        ++report.skipped;
      }
    }
    Var total;
    if (options.ranker_loss) {
      Var rl = ranker.loss(tape, outputs, ranker.batch_labels(data, rows));
      report.ranker_loss.push_back(rl.scalar());
      total = rl;
    }
    if (!keep.empty()) {
      MbdBranch::Heads h = branch.forward(tape, tape.constant(branch.batch(data, keep)));
      Var aux = auxiliary_loss(tape, h, tape.constant({keep.size(), 1}, target_rows),
                               branch.spec().quantiles);
      report.aux_loss.push_back(aux.scalar());
      total = total.valid() ? total + aux : aux;
    }
    if (!total.valid()) continue;
    if (!std::isfinite(total.scalar())) {
      throw NumericalError("joint loss is non-finite at step " + std::to_string(step));
    }
    ranker.params().zero_grad();
    branch.params().zero_grad();
    tape.backward(total);
    if (!options.ranker_loss && !ranker.params().grads_all_zero()) {
      report.ranker_grads_zero = false;
    }
    ranker_optimizer.step(ranker.params());
    branch_opt.step(branch.params());
  }
  return report;
}

std::size_t count_quantile_crossings(const EstimateColumns& est) {
  if (est.quantiles.size() < 2) return 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < est.quantiles[0].size(); ++i) {
    for (std::size_t k = 1; k < est.quantiles.size(); ++k) {
      if (est.quantiles[k][i] < est.quantiles[k - 1][i]) {
        ++n;
        break;
      }
    }
  }
  return n;
}

}  // namespace mbdlab::mbd
