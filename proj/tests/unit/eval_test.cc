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
#include <sstream>
#include <vector>

#include "doctest.h"
#include "mbdlab/eval/experiments.h"
#include "mbdlab/eval/metrics.h"
#include "../support/world.h"

using namespace mbdlab;
using namespace mbdlab::eval;
using testing::World;

namespace {

const World& world() {
  static const World w = testing::make_world(50000, 8);
  return w;
}

mbd::MbdBranch trained_branch(const World& w, const std::string& task, mbd::Space space) {
  mbd::BranchSpec spec;
  spec.task = task;
  spec.space = space;
  spec.features =
      mbd::make_bias_set("duration", {"user_full", "item_length", "item_format"}, w.train.schema);
  mbd::MbdBranch b(spec, w.train.schema);
  mbd::FitOptions o;
  o.steps = 2000;
  o.final_lr_fraction = 0.05;
  mbd::train_branch(b, w.model, w.train, o);
  return b;
}

const mbd::MbdBranch& watch_branch() {
  static const mbd::MbdBranch b = trained_branch(world(), "watch_time", mbd::Space::kLog1p);
  return b;
}

}  // namespace

TEST_CASE("bias: examples and length checks") {
  const std::vector<double> a = {1, 2}, z = {0, 0};
  CHECK(bias(a, a) == 0.0);
  CHECK(bias(a, z) == 1.5);
  CHECK_THROWS_AS(bias(a, std::vector<double>{1}), std::invalid_argument);
  CHECK_THROWS_AS(bias(std::vector<double>{}, std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("gaussian_nll: examples, rejection and the variance minimizer") {
  const std::vector<double> mu = {0.3, -1.0}, one = {1.0, 1.0};
  CHECK(gaussian_nll(mu, mu, one) == 0.0);
  CHECK(gaussian_nll(std::vector<double>{1.3, 0.0}, mu, one) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(gaussian_nll(mu, mu, std::vector<double>{1.0, 0.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(gaussian_nll(mu, mu, std::vector<double>{1.0, -2.0}),
                  std::invalid_argument);

  // Fixed residuals; scan a shared variance over a grid.
  const std::vector<double> p = {0.5, -1.2, 2.0, 0.1, -0.4};
  const std::vector<double> m(p.size(), 0.0);
  double msr = 0.0;
  for (double x : p) msr += x * x;
  msr /= p.size();
  double best_v = 0.0, best = INFINITY;
  for (int i = 1; i <= 4000; ++i) {
    const double v = 0.001 * i;
    const double nll = gaussian_nll(p, m, std::vector<double>(p.size(), v));
    if (nll < best) {
      best = nll;
      best_v = v;
    }
  }
  CHECK(std::abs(best_v - msr) <= 0.001);
}

TEST_CASE("pearson: examples, undefined cases, affine invariance") {
  CHECK(*pearson(std::vector<double>{1, 2, 3}, std::vector<double>{2, 4, 6}) ==
        doctest::Approx(1.0).epsilon(1e-15));
  const std::vector<double> a = {0.3, -1.0, 2.5, 0.7, 4.0};
  std::vector<double> neg, b = {1.0, 0.2, 0.9, -0.3, 2.2}, t;
  for (double x : a) neg.push_back(-x);
  CHECK(*pearson(a, neg) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK_FALSE(pearson(std::vector<double>{2, 2, 2}, std::vector<double>{1, 2, 3}).has_value());
  CHECK_FALSE(pearson(std::vector<double>{1}, std::vector<double>{1}).has_value());
  CHECK_THROWS_AS(pearson(a, std::vector<double>{1, 2}), std::invalid_argument);
  for (double x : b) t.push_back(3.5 * x - 7.0);
  CHECK(std::abs(*pearson(a, t) - *pearson(a, b)) <= 1e-12);
}

TEST_CASE("MetricReport and output formatting") {
  MetricReport r;
  r.add("rho", 0.25, 10);
  r.add("nll", std::nullopt, 0);
  REQUIRE(r.find("rho") != nullptr);
  CHECK(r.find("rho")->count == 10);
  CHECK_FALSE(r.find("nll")->value.has_value());
  CHECK(r.find("missing") == nullptr);
  CHECK(format_fixed(std::nullopt) == "undefined");
  CHECK(format_fixed(NAN) == "undefined");
  CHECK(format_fixed(0.123456) == "0.1235");
  CHECK(format_fixed(-0.00001) == "0.0000");
  CHECK(format_fixed(-1.5, 2) == "-1.50");
}

TEST_CASE("efficiency: ratios and flags") {
  CHECK(std::lround(*efficiency_ratio(-0.64, -0.83)) == 77);
  CHECK(std::lround(*efficiency_ratio(0.73, 0.13)) == 562);
  CHECK_FALSE(efficiency_ratio(0.5, 0.0).has_value());

  const std::vector<std::string> b = {"a", "b", "c"};
  const std::vector<double> cvv = {100, 0, 50}, cwt = {1000, 10, 500};
  const std::vector<double> tvv = {101, 3, 50}, twt = {1010, 12, 505};
  const auto rows = efficiency_analysis(b, cvv, cwt, tvv, twt);
  REQUIRE(rows.size() == 3);
  CHECK(*rows[0].pct_vv == doctest::Approx(1.0));
  CHECK(*rows[0].pct_wt == doctest::Approx(1.0));
  CHECK(*rows[0].ratio == doctest::Approx(100.0));
  CHECK(rows[1].flag == "zero_control");
  CHECK_FALSE(rows[1].ratio.has_value());
  CHECK(rows[2].flag == "zero_vv_shift");
  CHECK_FALSE(rows[2].ratio.has_value());
  CHECK_THROWS_AS(efficiency_analysis(b, cvv, cwt, tvv, std::vector<double>{1}),
                  std::invalid_argument);
}

TEST_CASE("published efficiency table: every ratio reproduces") {
  const auto& rows = published_efficiency();
  REQUIRE(rows.size() == 13);
  for (const PublishedEfficiency& r : rows) {
    CAPTURE(r.bucket);
    CHECK(reproduces(r));
  }
  // A wrong ratio must not pass.
  PublishedEfficiency bad = rows[0];
  bad.ratio = 90;
  CHECK_FALSE(reproduces(bad));
  // Printed ">200": only a lower bound.
  CHECK(rows[11].lower_bound);
  CHECK(*efficiency_ratio(rows[11].pct_wt, rows[11].pct_vv) > 200.0);
  CHECK_THROWS_AS(ratio_interval(0.1, 0.003), std::invalid_argument);
  const Interval iv = ratio_interval(0.43, 0.12);
  CHECK(iv.lo < 350.0);
  CHECK(iv.hi > 350.0);
}

TEST_CASE("slate efficiency: hand-counted slates") {
  Dataset d{synthenv::synthetic_schema(4), {}};
  const std::size_t col = d.schema.index_of(kDurationColumn);
  // Two slates of two; durations 3 s and 100 s in each.
  for (int s = 0; s < 2; ++s) {
    for (double dur : {3.0, 100.0}) {
      Interaction r;
      r.features.assign(d.schema.size(), 0.0);
      r.features[col] = dur;
      r.watch_time = dur / 2;
      d.rows.push_back(r);
    }
  }
  SlateOptions o;
  o.slate_size = 2;
  o.top_k = 1;
  // Control picks the short item twice; treatment once each.
  const auto rows = slate_efficiency(d, {1, 0, 1, 0}, {1, 0, 0, 1}, o);
  REQUIRE(rows.size() == 13);
  CHECK(*rows[0].pct_vv == doctest::Approx(-50.0));
  CHECK(*rows[0].pct_wt == doctest::Approx(-50.0));
  CHECK(*rows[0].ratio == doctest::Approx(100.0));
  CHECK(rows[7].flag == "zero_control");  // 90-180s had no control views
  CHECK(rows[1].flag == "zero_control");
  // Equal scores keep the earlier row.
  const auto tie = slate_efficiency(d, {0, 0, 0, 0}, {1, 0, 1, 0}, o);
  CHECK(tie[0].flag == "zero_vv_shift");
  CHECK_THROWS_AS(slate_efficiency(d, {0, 0}, {0, 0}, o), std::invalid_argument);
}

TEST_CASE("bucket fit: a constant branch gives a flat mean curve") {
  const World& w = world();
  mbd::BranchSpec spec;
  spec.task = "watch_time";
  spec.features = mbd::make_bias_set("len", {"item_length"}, w.train.schema);
  mbd::MbdBranch b(spec, w.train.schema);
  for (numerics::Param& prm : b.params().params()) {
    std::fill(prm.value.begin(), prm.value.end(), 0.0);
  }
  b.params().at("mean/b0").value = {2.0};
  std::vector<double> edges = signals::log_edges(2.0, 600.0, 8);
  edges.push_back(10000.0);  // nothing is that long
  const auto fit = distribution_fit_by_bucket(w.test, w.model, b, edges);
  REQUIRE(fit.size() == 9);
  for (std::size_t k = 0; k + 1 < 8; ++k) {
    CHECK(*fit[k].mean_mu == 2.0);
    CHECK(*fit[k + 1].mean_p > *fit[k].mean_p);
  }
  CHECK(fit[8].empty());
  CHECK_FALSE(fit[8].mean_p.has_value());
  std::ostringstream out;
  write_bucket_fit(out, "watch_time", {fit[8]});
  CHECK(out.str().find("undefined,undefined,undefined,undefined,empty") != std::string::npos);
}

TEST_CASE("bucket fit: the trained branch tracks the empirical curve") {
  const World& w = world();
  const auto fit =
      distribution_fit_by_bucket(w.test, w.model, watch_branch(), signals::log_edges(2, 600, 10));
  for (const BucketFit& f : fit) {
    CAPTURE(f.label);
    REQUIRE_FALSE(f.empty());
    // The curve spans about 4 log units; a continuous x' is not fit per bucket.
    CHECK(std::abs(*f.mean_mu - *f.mean_p) < 0.1);
    CHECK(*f.mean_var > 0.0);
  }
}

TEST_CASE("signal quality: NLL ordering and alignment on held-out data") {
  const World& w = world();
  const SignalQuality q = signal_quality(w.train, w.test, w.model, watch_branch());
  CHECK(q.count == w.test.size());
  CHECK(std::abs(*q.bias_mbd) < 0.05);
  CHECK(*q.nll_mbd < *q.nll_cluster);
  CHECK(*q.rho_trend > 0.7);
  CHECK(q.alignment_points == 10);
  CHECK(q.rho_uncertainty.has_value());
}

TEST_CASE("debias report: rows, counts and the sign pattern") {
  const World& w = world();
  const mbd::MbdBranch loop = trained_branch(w, "loop", mbd::Space::kLogit);
  const auto rows = debias_correlation_report(w.train, w.test, w.model, watch_branch(), loop);
  REQUIRE(rows.size() == 9);
  const std::vector<std::string> names = {"y", "log_y", "p", "vvp95", "vvp95_x_nts",
                                          "rps", "y",     "p", "rps"};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].signal == names[i]);
    CHECK(rows[i].count == rows[0].count);
    CHECK(rows[i].rho.has_value());
  }
  CHECK(*rows[2].rho > 0.3);
  CHECK(std::abs(*rows[5].rho) < std::abs(*rows[2].rho) / 5);
  CHECK(*rows[7].rho < -0.1);
  CHECK(std::abs(*rows[8].rho) < std::abs(*rows[7].rho) / 5);
}

TEST_CASE("oracle moments: RPS from simulated (mu, sigma) is uncorrelated with duration") {
  const World& w = world();
  const mbd::MbdBranch& b = watch_branch();
  const std::size_t n = std::min<std::size_t>(10000, w.test.size());
  std::vector<double> rps, dur;
  const auto heads = w.model.predict_outputs(w.test)[w.model.task_index("watch_time")];
  const std::size_t col = w.test.schema.index_of(kDurationColumn);
  for (std::size_t i = 0; i < n; ++i) {
    const auto m = oracle_prediction_moments(w.config, w.model, b,
                                             context_of(b, w.test.schema, w.test.rows[i]), 64,
                                             1000 + i);
    rps.push_back(signals::rps(heads[i], m.mean, std::sqrt(m.variance)));
    dur.push_back(w.test.rows[i].features[col]);
  }
  const auto rho = pearson(rps, dur);
  REQUIRE(rho.has_value());
  MESSAGE("oracle rps rho = " << *rho);
  CHECK(std::abs(*rho) <= 0.02);
}

TEST_CASE("staleness: index 0 is centred and a stationary world stays centred") {
  synthenv::GeneratorConfig cfg;
  cfg.drift = std::vector<double>(5, 1.0);
  StalenessSetup s;
  s.rows_per_index = 4000;
  s.warmup_rows = 30000;
  const auto series = run_staleness(cfg, s);
  REQUIRE(series.size() == 5);
  CHECK(std::abs(*series[0].frozen_mean_z) < 0.08);
  for (const StalenessPoint& p : series) {
    CAPTURE(p.index);
    CHECK(p.count == 2000);
    CHECK(std::abs(*p.frozen_mean_z) < 0.1);
    CHECK(std::abs(*p.mbd_mean_rps) < 0.1);
  }
}

TEST_CASE("staleness: a down-ramp pulls the frozen table away, not the branch") {
  synthenv::GeneratorConfig cfg;
  cfg.drift = drift_ramp(6, 0.7);
  CHECK(cfg.drift.front() == 1.0);
  CHECK(cfg.drift.back() == doctest::Approx(0.7));
  StalenessSetup s;
  s.rows_per_index = 4000;
  s.warmup_rows = 30000;
  const auto series = run_staleness(cfg, s);
  REQUIRE(series.size() == 6);
  CHECK(*series.back().frozen_mean_z < -0.15);
  CHECK(std::abs(*series.back().mbd_mean_rps) < 0.1);
}

TEST_CASE("writers: headers, comments and undefined cells") {
  std::ostringstream a;
  write_staleness(a, {{0, 0.01234, std::nullopt, 7}}, {"seed=1"});
  CHECK(a.str() == "# seed=1\nindex,count,frozen_mean_z,mbd_mean_rps\n0,7,0.0123,undefined\n");
  std::ostringstream b;
  write_correlation(b, {{"loop", "rps", -0.04, 3}});
  CHECK(b.str() == "task,signal,rho_duration,count\nloop,rps,-0.0400,3\n");
  std::ostringstream c;
  write_efficiency(c, published_efficiency_report());
  const std::string s = c.str();
  CHECK(s.find("published,0-5s,-0.64,-0.83,77.1084,,yes\n") != std::string::npos);
  CHECK(s.find("published,30-60m,0.53,0.25,212.0000,lower_bound,yes\n") != std::string::npos);
  std::ostringstream d;
  SignalQuality q;
  q.branch = "ctx";
  q.task = "like";
  q.space = "logit";
  q.count = 2;
  q.nll_mbd = 0.25;
  write_signal_quality(d, {q});
  CHECK(d.str() ==
        "branch,task,space,count,bias_ranker,bias_mbd,nll_cluster,nll_mbd,rho_trend,"
        "rho_uncertainty,alignment_buckets\n"
        "ctx,like,logit,2,undefined,undefined,undefined,0.2500,undefined,undefined,0\n");
}
