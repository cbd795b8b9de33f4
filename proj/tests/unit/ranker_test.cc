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
#include <cstdio>
#include <filesystem>
#include <limits>

#include "doctest.h"
#include "mbdlab/errors.h"
#include "mbdlab/ranker/ranker.h"
#include "mbdlab/synthenv/generator.h"

using namespace mbdlab;
using namespace mbdlab::ranker;

namespace {

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= a.size();
  mb /= b.size();
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

struct Trained {
  Dataset train, test;
  RankerModel model;
};

// Defaults end to end: 100k interactions, every fifth row held out.
const Trained& trained() {
  static const Trained t = [] {
    Dataset all = synthenv::generate(synthenv::GeneratorConfig{});
    Trained out;
    out.train.schema = out.test.schema = all.schema;
    for (std::size_t i = 0; i < all.size(); ++i) {
      (i % 5 == 0 ? out.test : out.train).rows.push_back(all.rows[i]);
    }
    fit_normalization(out.train.schema, out.train.rows);
    out.test.schema = out.train.schema;
    out.model = RankerModel(out.train.schema, default_tasks(), RankerConfig{});
    numerics::Optimizer opt({}, out.model.params());
    train(out.model, out.train, opt, TrainOptions{});
    return out;
  }();
  return t;
}

Dataset toy_separable(std::size_t n) {
  Dataset d;
  d.schema.names = {"a", "b"};
  d.schema.continuous = {true, true};
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal(0.0, 1.0);
  while (d.rows.size() < n) {
    Interaction r;
    r.features = {normal(rng), normal(rng)};
    const double margin = r.features[0] - 0.5 * r.features[1];
    if (std::abs(margin) < 0.2) continue;
    r.like = margin > 0 ? 1 : 0;
    d.rows.push_back(r);
  }
  return d;
}

}  // namespace

TEST_CASE("predict: zero-weight model returns the head bias") {
  FeatureSchema s = synthenv::synthetic_schema(4);
  RankerModel m(s, default_tasks(), RankerConfig{});
  for (numerics::Param& p : m.params().params()) std::fill(p.value.begin(), p.value.end(), 0.0);
  m.params().at("head_watch_time/b1").value = {2.5};
  m.params().at("head_like/b1").value = {-3.0};
  std::vector<double> x(s.size(), 0.7), y(s.size(), -4.0);
  for (const auto& input : {x, y}) {
    auto p = m.predict(input);
    CHECK(p[0].value == 2.5);
    CHECK(p[1].logit == -3.0);
    CHECK(p[1].value == doctest::Approx(1.0 / (1.0 + std::exp(3.0))).epsilon(1e-15));
    CHECK(p[2].value == 0.5);
  }
}

TEST_CASE("predict: binary heads give probabilities whose logit round-trips") {
  const Trained& t = trained();
  for (std::size_t i = 0; i < 500; ++i) {
    auto p = t.model.predict(t.test.rows[i].features);
    for (std::size_t k : {1u, 2u}) {
      CHECK(p[k].value > 0.0);
      CHECK(p[k].value < 1.0);
      CHECK(std::isfinite(p[k].logit));
      CHECK(std::abs(logit(p[k].value) - p[k].logit) < 1e-9);
    }
  }
}

TEST_CASE("predict: schema width mismatch is rejected") {
  RankerModel m(synthenv::synthetic_schema(4), default_tasks(), RankerConfig{});
  CHECK_THROWS_AS(m.predict(std::vector<double>(3, 0.0)), ShapeError);
}

TEST_CASE("predict: batched and single-row paths agree") {
  const Trained& t = trained();
  Dataset head{t.test.schema, {t.test.rows.begin(), t.test.rows.begin() + 50}};
  auto out = t.model.predict_outputs(head);
  for (std::size_t i = 0; i < head.size(); ++i) {
    auto p = t.model.predict(head.rows[i].features);
    CHECK(out[0][i] == doctest::Approx(p[0].value).epsilon(1e-12));
    CHECK(out[1][i] == doctest::Approx(p[1].logit).epsilon(1e-12));
  }
}

TEST_CASE("train: the ranker amplifies duration bias") {
  const Trained& t = trained();
  auto out = t.model.predict_outputs(t.test);
  std::vector<double> log_y, dur = t.test.column("item_duration");
  for (const Interaction& r : t.test.rows) log_y.push_back(std::log1p(r.watch_time));
  const double rho_p = pearson(out[0], dur);
  const double rho_y = pearson(log_y, dur);
  MESSAGE("rho(p, dur) = " << rho_p << ", rho(log y, dur) = " << rho_y);
  CHECK(rho_p > rho_y);
}

TEST_CASE("train: held-out calibration is near zero") {
  const Trained& t = trained();
  auto out = t.model.predict_outputs(t.test);
  double bias_wt = 0.0, bias_like = 0.0;
  for (std::size_t i = 0; i < t.test.size(); ++i) {
    bias_wt += out[0][i] - std::log1p(t.test.rows[i].watch_time);
    bias_like += sigmoid(out[1][i]) - t.test.rows[i].like;
  }
  bias_wt /= t.test.size();
  bias_like /= t.test.size();
  MESSAGE("bias watch = " << bias_wt << ", like = " << bias_like);
  CHECK(std::abs(bias_wt) <= 0.05);
  CHECK(std::abs(bias_like) <= 0.05);
}

TEST_CASE("train: zero learning rate leaves parameters unchanged") {
  synthenv::GeneratorConfig c;
  c.num_interactions = 10;
  Dataset d = synthenv::generate(c);
  for (auto kind : {numerics::OptimizerKind::kSgd, numerics::OptimizerKind::kAdam}) {
    RankerModel m(d.schema, default_tasks(), RankerConfig{});
    const numerics::ParamStore before = m.params();
    numerics::OptimizerConfig oc;
    oc.kind = kind;
    oc.learning_rate = 0.0;
    numerics::Optimizer opt(oc, m.params());
    TrainOptions o;
    o.epochs = 1;
    auto report = train(m, d, opt, o);
    CHECK(report.steps == 1);
    for (std::size_t i = 0; i < before.size(); ++i) {
      CHECK(m.params().at(i).value == before.at(i).value);
    }
  }
}

TEST_CASE("train: separable toy task drives BCE below 0.1 within 500 steps") {
  Dataset d = toy_separable(512);
  fit_normalization(d.schema, d.rows);
  RankerModel m(d.schema, {binary_task("like")}, RankerConfig{{16}, {8}, 3});
  numerics::OptimizerConfig oc;
  oc.learning_rate = 0.01;
  numerics::Optimizer opt(oc, m.params());
  TrainOptions o;
  o.batch_size = 64;
  o.epochs = 1;
  std::size_t steps = 0;
  double last = 1.0;
  while (steps < 500 && last >= 0.1) {
    auto r = train(m, d, opt, o);
    steps += r.steps;
    last = r.epoch_loss.back();
    o.seed += 1;
  }
  MESSAGE("BCE " << last << " after " << steps << " steps");
  CHECK(last < 0.1);
  CHECK(steps <= 500);
}

TEST_CASE("train: loss traces are reproducible under each order policy") {
  Dataset d = toy_separable(300);
  auto run = [&](bool shuffle) {
    RankerModel m(d.schema, {binary_task("like")}, RankerConfig{{8}, {4}, 2});
    numerics::Optimizer opt({}, m.params());
    TrainOptions o;
    o.epochs = 3;
    o.batch_size = 32;
    o.shuffle = shuffle;
    return train(m, d, opt, o).epoch_loss;
  };
  CHECK(run(true) == run(true));
  CHECK(run(false) == run(false));
  CHECK(run(true) != run(false));
  CHECK(permutation(10, 4) == permutation(10, 4));
  CHECK(permutation(10, 4) != permutation(10, 5));
}

TEST_CASE("train: non-finite loss aborts with a diagnostic checkpoint") {
  Dataset d = toy_separable(40);
  RankerModel m(d.schema, {binary_task("like")}, RankerConfig{{4}, {}, 1});
  m.params().at("head_like/b0").value[0] = std::numeric_limits<double>::quiet_NaN();
  numerics::Optimizer opt({}, m.params());
  TrainOptions o;
  const auto path = std::filesystem::temp_directory_path() / "mbdlab_ranker_diag.ckpt";
  std::filesystem::remove(path);
  o.diagnostic_path = path.string();
  CHECK_THROWS_AS(train(m, d, opt, o), NumericalError);
  CHECK(std::filesystem::exists(path));
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint: save and load reproduce predictions bit for bit") {
  const Trained& t = trained();
  const auto path = (std::filesystem::temp_directory_path() / "mbdlab_ranker.ckpt").string();
  t.model.save(path);
  RankerModel back = RankerModel::load(path);
  CHECK(back.schema() == t.model.schema());
  for (std::size_t i = 0; i < 20; ++i) {
    auto a = t.model.predict(t.test.rows[i].features);
    auto b = back.predict(t.test.rows[i].features);
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k].logit == b[k].logit);
  }
  std::filesystem::remove(path);
  std::filesystem::remove(path + ".schema.json");
}
