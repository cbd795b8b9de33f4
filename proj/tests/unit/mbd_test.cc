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

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

#include "doctest.h"
#include "mbdlab/errors.h"
#include "mbdlab/mbd/branch.h"
#include "../support/world.h"

using namespace mbdlab;
using namespace mbdlab::mbd;
using numerics::Matrix;
using numerics::Tape;
using numerics::Var;
using testing::World;

namespace {

const World& world() {
  static const World w = testing::make_world(40000, 4);
  return w;
}

// One-hot bucket features: row i belongs to bucket[i].
Matrix one_hot(const std::vector<std::size_t>& bucket, std::size_t k) {
  Matrix m(bucket.size(), k);
  for (std::size_t i = 0; i < bucket.size(); ++i) m(i, bucket[i]) = 1.0;
  return m;
}

FeatureSchema bucket_schema(std::size_t k) {
  FeatureSchema s;
  for (std::size_t j = 0; j < k; ++j) {
    s.names.push_back("bucket_" + std::to_string(j));
    s.continuous.push_back(false);
  }
  return s;
}

BranchSpec linear_bucket_spec(std::size_t k) {
  BranchSpec spec;
  spec.task = "watch_time";
  spec.features.name = "buckets";
  spec.features.columns = bucket_schema(k).names;
  spec.hidden = {};
  return spec;
}

FitOptions full_batch(std::size_t steps, double lr) {
  FitOptions o;
  o.steps = steps;
  o.batch_size = 0;
  o.optimizer.learning_rate = lr;
  o.final_lr_fraction = 0.01;
  return o;
}

}  // namespace

TEST_CASE("project: full set, singleton and unknown column") {
  const FeatureSchema s = synthenv::synthetic_schema(4);
  std::vector<double> x(s.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.5 * i - 1.0;
  BiasFeatureSet all{"all", s.names};
  CHECK(project(x, all, s) == x);

  BiasFeatureSet length = make_bias_set("len", {"item_length"}, s);
  auto xp = project(x, length, s);
  REQUIRE(xp.size() == 1);
  CHECK(xp[0] == x[s.index_of("item_log_duration")]);

  BiasFeatureSet bad{"bad", {"user_patience", "item_color"}};
  try {
    project(x, bad, s);
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("item_color") != std::string::npos);
  }
  CHECK_THROWS_AS(project(std::vector<double>(3), length, s), ShapeError);
  CHECK_THROWS(BiasFeatureSet({"dup", {"item_quality", "item_quality"}}).validate(s));
  CHECK_THROWS(BiasFeatureSet({"empty", {}}).validate(s));
}

TEST_CASE("bias sets: group tokens expand in declared order") {
  const FeatureSchema s = synthenv::synthetic_schema(4);
  auto dur = make_bias_set("duration", {"user_full", "item_length"}, s);
  CHECK(dur.columns.size() == 10);
  CHECK(dur.columns.front() == "user_taste_0");
  CHECK(dur.columns.back() == "item_log_duration");
  auto region = make_bias_set("region", {"user_region", "item_full"}, s);
  CHECK(region.columns[0] == "user_region_a");
  CHECK(region.columns.size() == 2 + 10);
  auto views = make_bias_set("cold", {"user_full", "item_views"}, s);
  CHECK(views.columns.back() == "item_log_views");
}

TEST_CASE("mean_loss: values and gradients") {
  CHECK(mean_loss(1.7, 1.7) == 0.0);
  CHECK(mean_loss(2.0, 0.0) == 4.0);

  Tape tape;
  Var a = tape.variable({1, 1}, {2.0});  // stands in for a ranker parameter
  Var mu = tape.variable({1, 1}, {0.0});
  Var loss = mean_loss(tape, tape.stop_gradient(a), mu);
  CHECK(loss.scalar() == 4.0);
  tape.backward(loss);
  CHECK(tape.grad(mu)[0] == -4.0);
  CHECK(tape.grad(a)[0] == 0.0);
}

TEST_CASE("mean_loss: constant minimizer over a batch is the batch mean") {
  std::vector<double> p{1.0, 2.0, 3.0};
  // d/dmu sum (p - mu)^2 vanishes at mu = 2 and nowhere else on a grid.
  auto dloss = [&](double mu) {
    Tape tape;
    Var m = tape.variable({3, 1}, {mu, mu, mu});
    Var l = tape.sum(mean_loss(tape, tape.constant({3, 1}, p), m));
    tape.backward(l);
    auto g = tape.grad(m);
    return g[0] + g[1] + g[2];
  };
  CHECK(dloss(2.0) == 0.0);
  CHECK(dloss(1.9) < 0.0);
  CHECK(dloss(2.1) > 0.0);

  MbdBranch b(linear_bucket_spec(1), bucket_schema(1));
  fit_branch(b, one_hot({0, 0, 0}, 1), p, full_batch(3000, 0.05));
  auto e = b.estimate(std::vector<double>{1.0});
  CHECK(e.mean == doctest::Approx(2.0).epsilon(1e-4));
}

TEST_CASE("variance_loss: values and gradients") {
  CHECK(variance_loss(3.0, 1.0, 4.0) == 0.0);
  CHECK(variance_loss(3.0, 1.0, 0.0) == 16.0);

  Tape tape;
  Var p = tape.constant({1, 1}, {3.0});
  Var mu = tape.variable({1, 1}, {1.0});
  Var var = tape.variable({1, 1}, {0.0});
  Var loss = variance_loss(tape, p, mu, var);
  CHECK(loss.scalar() == 16.0);
  tape.backward(loss);
  CHECK(tape.grad(var)[0] == -8.0);
  CHECK(tape.grad(mu)[0] == 0.0);
}

TEST_CASE("variance_loss: constant minimizer is the mean squared residual") {
  // Residuals^2 in {0, 4}: p in {1, 3} around mu = 1 ... use mu fixed at 1.
  auto dloss = [](double v) {
    Tape tape;
    Var var = tape.variable({2, 1}, {v, v});
    Var mu = tape.constant({2, 1}, {1.0, 1.0});
    Var l = tape.sum(variance_loss(tape, tape.constant({2, 1}, {1.0, 3.0}), mu, var));
    tape.backward(l);
    auto g = tape.grad(var);
    return g[0] + g[1];
  };
  CHECK(dloss(2.0) == 0.0);
  CHECK(dloss(1.5) < 0.0);
  CHECK(dloss(2.5) > 0.0);
}

TEST_CASE("logit_target: values, clamping and inverse") {
  CHECK(logit_target(0.5) == 0.0);
  CHECK(logit_target(0.01) == doctest::Approx(std::log(0.01 / 0.99)).epsilon(1e-14));
  CHECK(logit_target(0.01) == doctest::Approx(-4.5951).epsilon(1e-4));
  CHECK(logit_target(0.0) == logit_target(1e-6));
  CHECK(logit_target(1.0) == logit_target(1.0 - 1e-6));
  CHECK_THROWS_AS(logit_target(-0.1), std::invalid_argument);
  CHECK_THROWS_AS(logit_target(1.5), std::invalid_argument);
  CHECK_THROWS_AS(logit_target(std::numeric_limits<double>::quiet_NaN()), std::invalid_argument);
  double worst = 0.0;
  for (int i = 0; i <= 10000; ++i) {
    // Log-spaced near both ends plus a linear sweep.
    const double t = i / 10000.0;
    for (double p : {1e-6 + t * (1.0 - 2e-6), std::pow(10.0, -6.0 + 5.0 * t),
                     1.0 - std::pow(10.0, -6.0 + 5.0 * t)}) {
      worst = std::max(worst, std::abs(ranker::sigmoid(logit_target(p)) - p));
    }
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("pinball_loss: unit cases and median reduction") {
  CHECK(pinball_loss(4.0, 2.0, 0.5) == 1.0);
  CHECK(pinball_loss(10.0, 8.0, 0.9) == doctest::Approx(1.8).epsilon(1e-15));
  CHECK(pinball_loss(8.0, 10.0, 0.9) == doctest::Approx(0.2).epsilon(1e-14));
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int i = 0; i < 100; ++i) {
    const double p = n(rng), q = n(rng);
    CHECK(pinball_loss(p, q, 0.5) == doctest::Approx(0.5 * std::abs(p - q)).epsilon(1e-15));
    Tape tape;
    Var l = tape.pinball(tape.constant({1, 1}, {p}), tape.constant({1, 1}, {q}), 0.3);
    CHECK(l.scalar() == pinball_loss(p, q, 0.3));
  }
  CHECK_THROWS_AS(pinball_loss(1.0, 0.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(pinball_loss(1.0, 0.0, 1.0), std::invalid_argument);
}

TEST_CASE("zero leakage: auxiliary losses leave every ranker gradient at zero") {
  World w = world();
  BranchSpec spec;
  spec.task = "watch_time";
  spec.features = make_bias_set("duration", {"user_full", "item_length"}, w.train.schema);
  spec.quantiles = {0.1, 0.5, 0.9};
  MbdBranch b(spec, w.train.schema);
  std::vector<std::size_t> rows{0, 1, 2, 3, 4, 5, 6, 7};
  Tape tape;
  auto out = w.model.forward(tape, tape.constant(w.model.batch_features(w.train, rows)));
  MbdBranch::Heads h = b.forward(tape, tape.constant(b.batch(w.train, rows)));
  Var aux = auxiliary_loss(tape, h, out[0], spec.quantiles);
  w.model.params().zero_grad();
  tape.backward(aux);
  CHECK(w.model.params().grads_all_zero());
  CHECK_FALSE(b.params().grads_all_zero());

  // Same with the logit-space binary target path.
  BranchSpec like = spec;
  like.task = "like";
  like.space = Space::kLogit;
  MbdBranch bl(like, w.train.schema);
  Tape t2;
  auto out2 = w.model.forward(t2, t2.constant(w.model.batch_features(w.train, rows)));
  Var pl = t2.stop_gradient(out2[1]);
  std::vector<double> tgt;
  for (double o : pl.value()) tgt.push_back(bl.prediction_target(o));
  Var aux2 = auxiliary_loss(t2, bl.forward(t2, t2.constant(bl.batch(w.train, rows))),
                            t2.constant({rows.size(), 1}, tgt), like.quantiles);
  w.model.params().zero_grad();
  t2.backward(aux2 + 0.0 * t2.sum(pl));
  CHECK(w.model.params().grads_all_zero());
}

TEST_CASE("train_joint: ranker loss disabled leaves the ranker bit-identical") {
  World w = world();
  const numerics::ParamStore before = w.model.params();
  BranchSpec spec;
  spec.task = "watch_time";
  spec.features = make_bias_set("duration", {"user_full", "item_length"}, w.train.schema);
  MbdBranch b(spec, w.train.schema);
  const numerics::ParamStore branch_before = b.params();
  numerics::Optimizer ranker_opt({}, w.model.params());
  JointOptions o;
  o.steps = 1000;
  o.ranker_loss = false;
  JointReport r = train_joint(w.model, ranker_opt, b, w.train, o);
  CHECK(r.ranker_grads_zero);
  CHECK(r.aux_loss.size() == 1000);
  for (std::size_t i = 0; i < before.size(); ++i) {
    CHECK(w.model.params().at(i).value == before.at(i).value);
  }
  bool moved = false;
  for (std::size_t i = 0; i < branch_before.size(); ++i) {
    moved = moved || b.params().at(i).value != branch_before.at(i).value;
  }
  CHECK(moved);
}

TEST_CASE("train_joint: enabled ranker loss trains both") {
  World w = world();
  const numerics::ParamStore before = w.model.params();
  BranchSpec spec;
  spec.task = "loop";
  spec.space = Space::kLogit;
  spec.features = make_bias_set("duration", {"item_length"}, w.train.schema);
  MbdBranch b(spec, w.train.schema);
  numerics::Optimizer ranker_opt({}, w.model.params());
  JointOptions o;
  o.steps = 20;
  JointReport r = train_joint(w.model, ranker_opt, b, w.train, o);
  CHECK(r.ranker_loss.size() == 20);
  CHECK(w.model.params().at(0).value != before.at(0).value);
}

TEST_CASE("bucket equivalence: linear one-hot heads recover per-bucket moments") {
  constexpr std::size_t kBuckets = 10;
  std::mt19937_64 rng(99);
  std::vector<std::size_t> bucket;
  std::vector<double> p;
  std::vector<std::vector<double>> per(kBuckets);
  for (std::size_t k = 0; k < kBuckets; ++k) {
    std::lognormal_distribution<double> draw(0.2 * k, 0.3 + 0.05 * k);
    for (int i = 0; i < 1000; ++i) {
      const double v = std::log1p(draw(rng));
      bucket.push_back(k);
      p.push_back(v);
      per[k].push_back(v);
    }
  }
  MbdBranch b(linear_bucket_spec(kBuckets), bucket_schema(kBuckets));
  fit_branch(b, one_hot(bucket, kBuckets), p, full_batch(4000, 0.05));
  for (std::size_t k = 0; k < kBuckets; ++k) {
    std::vector<double> x(kBuckets, 0.0);
    x[k] = 1.0;
    auto e = b.estimate(x);
    CHECK(std::abs(e.mean - testing::mean_of(per[k])) < 1e-2);
    CHECK(e.variance == doctest::Approx(testing::pop_variance(per[k])).epsilon(0.05));
  }
}

TEST_CASE("estimate: zero weights give the head biases everywhere") {
  const FeatureSchema s = synthenv::synthetic_schema(4);
  BranchSpec spec;
  spec.task = "watch_time";
  spec.features = make_bias_set("d", {"user_full", "item_length"}, s);
  spec.quantiles = {0.5};
  MbdBranch b(spec, s);
  for (numerics::Param& prm : b.params().params()) std::fill(prm.value.begin(), prm.value.end(), 0.0);
  b.params().at("mean/b0").value = {1.25};
  b.params().at("raw_variance/b0").value = {-0.5};
  for (double v : {-2.0, 0.0, 3.0}) {
    auto e = b.estimate(std::vector<double>(10, v));
    CHECK(e.mean == 1.25);
    CHECK(e.variance == std::exp(-0.5));
    REQUIRE(e.quantiles.size() == 1);
    CHECK(e.quantiles[0].second == 0.0);
  }
  b.params().at("raw_variance/b0").value = {-100.0};
  CHECK(b.estimate(std::vector<double>(10, 0.0)).variance == 1e-6);
  CHECK_THROWS_AS(b.estimate(std::vector<double>(3, 0.0)), ShapeError);
}

TEST_CASE("estimate: watch-time mean rises with duration") {
  const World& w = world();
  BranchSpec spec;
  spec.task = "watch_time";
  spec.features = make_bias_set("len", {"item_length"}, w.train.schema);
  MbdBranch b(spec, w.train.schema);
  FitOptions o;
  o.steps = 3000;
  train_branch(b, w.model, w.train, o);
  double prev = -1e9;
  for (double d : {2.5, 5.0, 10.0, 20.0, 40.0, 80.0, 160.0, 320.0, 590.0}) {
    const double mu = b.estimate(std::vector<double>{std::log(d)}).mean;
    CHECK(mu > prev);
    prev = mu;
  }
}

TEST_CASE("unbiasedness and quantile coverage on held-out data") {
  const World& w = world();
  BranchSpec spec;
  spec.task = "watch_time";
  spec.features = make_bias_set("duration", {"user_full", "item_length"}, w.train.schema);
  spec.quantiles = {0.1, 0.5, 0.9};
  MbdBranch b(spec, w.train.schema);
  FitOptions o;
  o.steps = 6000;
  o.final_lr_fraction = 0.1;
  train_branch(b, w.model, w.train, o);

  const std::vector<double> p = branch_targets(b, w.model, w.test);
  const EstimateColumns est = b.estimate_all(w.test);
  double bias = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) bias += p[i] - est.mean[i];
  bias /= p.size();
  MESSAGE("held-out bias " << bias);
  CHECK(std::abs(bias) < 0.02);
  for (std::size_t k = 0; k < 3; ++k) {
    double below = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) below += p[i] < est.quantiles[k][i];
    below /= p.size();
    MESSAGE("tau " << spec.quantiles[k] << " coverage " << below);
    CHECK(std::abs(below - spec.quantiles[k]) <= 0.03);
  }
  for (double v : est.variance) CHECK(v >= 1e-6);
  MESSAGE("quantile crossings: " << count_quantile_crossings(est) << " of " << p.size());
}

TEST_CASE("quantile head: tau = 0.5 converges to the batch median") {
  std::mt19937_64 rng(4);
  std::gamma_distribution<double> g(2.0, 1.5);
  std::vector<double> p(2001);
  for (double& v : p) v = g(rng);
  BranchSpec spec = linear_bucket_spec(1);
  spec.quantiles = {0.5};
  MbdBranch b(spec, bucket_schema(1));
  fit_branch(b, one_hot(std::vector<std::size_t>(p.size(), 0), 1), p, full_batch(6000, 0.05));
  const double q = b.estimate(std::vector<double>{1.0}).quantiles[0].second;
  const double med = testing::median_of(p);
  MESSAGE("q0.5 = " << q << ", median = " << med);
  CHECK(std::abs(q - med) <= 0.02 * std::abs(med));
}

TEST_CASE("logit space keeps a non-degenerate like variance") {
  const World& w = world();
  auto run = [&](Space space) {
    BranchSpec spec;
    spec.task = "like";
    spec.space = space;
    spec.features = make_bias_set("duration", {"user_full", "item_length"}, w.train.schema);
    MbdBranch b(spec, w.train.schema);
    FitOptions o;
    o.steps = 3000;
    train_branch(b, w.model, w.train, o);
    return b.estimate_all(w.test);
  };
  const EstimateColumns lg = run(Space::kLogit);
  const EstimateColumns pr = run(Space::kProbability);
  const double var_logit = testing::mean_of(lg.variance);
  const double var_prob = testing::mean_of(pr.variance);
  double base = 0.0;
  for (const Interaction& r : w.train.rows) base += r.like;
  base /= w.train.size();
  const double slope = base * (1.0 - base);
  MESSAGE("mean var logit " << var_logit << ", prob " << var_prob << ", base rate " << base);
  CHECK(var_logit > 10.0 * var_prob * slope);
  CHECK(var_logit > 1e-2);
}

TEST_CASE("training: non-finite targets are skipped and counted") {
  MbdBranch b(linear_bucket_spec(2), bucket_schema(2));
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> t{1.0, nan, 2.0, std::numeric_limits<double>::infinity()};
  FitReport r = fit_branch(b, one_hot({0, 1, 1, 0}, 2), t, full_batch(10, 0.01));
  CHECK(r.skipped == 2);
  CHECK(r.steps == 10);
  std::vector<double> all_bad{nan, nan};
  CHECK_THROWS_AS(fit_branch(b, one_hot({0, 1}, 2), all_bad, full_batch(1, 0.01)),
                  std::invalid_argument);
}

TEST_CASE("checkpoint: branch save/load keeps the descriptor and estimates") {
  const World& w = world();
  BranchSpec spec;
  spec.task = "like";
  spec.space = Space::kLogit;
  spec.quantiles = {0.25, 0.75};
  spec.features = make_bias_set("cold", {"user_full", "item_views"}, w.train.schema);
  MbdBranch b(spec, w.train.schema);
  FitOptions o;
  o.steps = 50;
  train_branch(b, w.model, w.train, o);
  const auto path = (std::filesystem::temp_directory_path() / "mbdlab_branch.ckpt").string();
  b.save(path);
  MbdBranch back = MbdBranch::load(path);
  CHECK(back.spec().features.columns == spec.features.columns);
  CHECK(back.spec().space == Space::kLogit);
  CHECK(back.spec().quantiles == spec.quantiles);
  auto xp = b.project(w.test.rows[3].features);
  CHECK(back.project(w.test.rows[3].features) == xp);
  auto e1 = b.estimate(xp), e2 = back.estimate(xp);
  CHECK(e1.mean == e2.mean);
  CHECK(e1.variance == e2.variance);
  CHECK(e1.quantiles == e2.quantiles);
  std::filesystem::remove(path);
}

TEST_CASE("quantile crossings are counted, not repaired") {
  EstimateColumns e;
  e.quantiles = {{0.0, 1.0, 2.0}, {1.0, 0.5, 3.0}, {2.0, 2.0, 2.5}};
  CHECK(count_quantile_crossings(e) == 2);
  BranchSpec spec = linear_bucket_spec(1);
  spec.quantiles = {0.9, 0.1};
  CHECK_THROWS(MbdBranch(spec, bucket_schema(1)));
}
