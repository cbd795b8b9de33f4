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

#include "mbdlab/eval/experiments.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <unordered_map>

#include "mbdlab/errors.h"

namespace mbdlab::eval {

namespace {

using ranker::RankerModel;
using mbd::MbdBranch;

bool is_video(const Dataset& data, const Interaction& r) {
  return r.features[data.schema.index_of("item_format_video")] > 0.5;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double pop_var(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

std::string edge_label(double lo, double hi) {
  return format_fixed(lo, 2) + "-" + format_fixed(hi, 2);
}

void write_comments(std::ostream& out, const std::vector<std::string>& comments) {
  for (const std::string& c : comments) out << "# " << c << "\n";
}

}  // namespace

TaskScores score_task(const Dataset& data, const RankerModel& ranker, const MbdBranch& branch) {
  const std::string& task = branch.spec().task;
  TaskScores s;
  s.head = ranker.predict_outputs(data)[ranker.task_index(task)];
  s.p.reserve(data.size());
  s.label.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    s.p.push_back(branch.prediction_target(s.head[i]));
    s.label.push_back(branch.label_target(label_value(data.rows[i], task)));
  }
  s.est = branch.estimate_all(data);
  return s;
}

// ---------------------------------------------------------------------------

SignalQuality signal_quality(const Dataset& train, const Dataset& test, const RankerModel& ranker,
                             const MbdBranch& branch, const ClusterOptions& options) {
  if (test.empty()) throw std::invalid_argument("signal_quality: empty evaluation set");
  const std::string& task = branch.spec().task;
  const ranker::TaskSpec& spec = ranker.tasks()[ranker.task_index(task)];
  const TaskScores s = score_task(test, ranker, branch);

  SignalQuality q;
  q.branch = branch.spec().features.name;
  q.task = task;
  q.space = mbd::to_string(branch.spec().space);
  q.count = test.size();

  std::vector<double> natural, truth;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const double y = label_value(test.rows[i], task);
    natural.push_back(spec.binary() ? ranker::sigmoid(s.head[i]) : s.head[i]);
    truth.push_back(ranker::transform_label(spec, y));
  }
  q.bias_ranker = bias(natural, truth);
  q.bias_mbd = bias(s.p, s.est.mean);
  q.nll_mbd = gaussian_nll(s.p, s.est.mean, s.est.variance);
  q.rho_trend = pearson(s.p, s.est.mean);

  auto train_label = [&](const Interaction& r) {
    return branch.label_target(label_value(r, task));
  };
  const signals::BucketTable coarse = signals::build_bucket_table(
      train, options.attribute, signals::log_edges(options.lo, options.hi, options.nll_buckets),
      train_label);
  const std::size_t col = test.schema.index_of(options.attribute);
  std::vector<double> mu_c, var_c, p_c;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const std::size_t k = coarse.bucket_of(test.rows[i].features[col]);
    if (!coarse.buckets[k].defined() || !(coarse.buckets[k].variance > 0.0)) continue;
    mu_c.push_back(coarse.buckets[k].mean);
    var_c.push_back(coarse.buckets[k].variance);
    p_c.push_back(s.p[i]);
  }
  if (!p_c.empty()) q.nll_cluster = gaussian_nll(p_c, mu_c, var_c);

  const signals::BucketTable fine = signals::build_bucket_table(
      train, options.attribute,
      signals::log_edges(options.lo, options.hi, options.alignment_buckets), train_label);
  std::vector<std::vector<double>> sig(fine.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    sig[fine.bucket_of(test.rows[i].features[col])].push_back(std::sqrt(s.est.variance[i]));
  }
  std::vector<double> sigma_mbd, sigma_cluster;
  for (std::size_t k = 0; k < fine.size(); ++k) {
    if (sig[k].empty() || !fine.buckets[k].defined()) continue;
    sigma_mbd.push_back(mean(sig[k]));
    sigma_cluster.push_back(std::sqrt(fine.buckets[k].variance));
  }
  q.alignment_points = sigma_mbd.size();
  q.rho_uncertainty = pearson(sigma_mbd, sigma_cluster);
  return q;
}

// ---------------------------------------------------------------------------

std::vector<CorrelationRow> debias_correlation_report(const Dataset& train, const Dataset& test,
                                                      const RankerModel& ranker,
                                                      const MbdBranch& watch_branch,
                                                      const MbdBranch& loop_branch,
                                                      const CorrelationOptions& options) {
  const Dataset eval =
      options.video_only ? test.filter([&](const Interaction& r) { return is_video(test, r); })
                         : test;
  const Dataset base =
      options.video_only ? train.filter([&](const Interaction& r) { return is_video(train, r); })
                         : train;
  if (eval.empty()) throw std::invalid_argument("debias_correlation_report: no rows to score");
  const std::vector<double> duration = eval.column(kDurationColumn);

  std::vector<CorrelationRow> rows;
  auto add = [&](const std::string& task, const std::string& signal,
                 const std::vector<double>& v) {
    rows.push_back({task, signal, pearson(v, duration), v.size()});
  };

  {
    const TaskScores s = score_task(eval, ranker, watch_branch);
    std::vector<double> y, logy, rps;
    for (std::size_t i = 0; i < eval.size(); ++i) {
      y.push_back(eval.rows[i].watch_time);
      logy.push_back(std::log1p(eval.rows[i].watch_time));
      rps.push_back(signals::rps(s.p[i], s.est.mean[i], std::sqrt(s.est.variance[i])));
    }
    const signals::BucketTable table = signals::build_bucket_table(
        base, kDurationColumn, options.edges,
        [](const Interaction& r) { return std::log1p(r.watch_time); });

    // Content-side seven-day average: per-item mean watch time on the base set.
    std::unordered_map<std::uint32_t, std::pair<double, std::size_t>> per_item;
    double total = 0.0;
    for (const Interaction& r : base.rows) {
      auto& e = per_item[r.item_id];
      e.first += r.watch_time;
      ++e.second;
      total += r.watch_time;
    }
    const double global = base.empty() ? 0.0 : total / static_cast<double>(base.size());

    std::vector<double> vvp, vvp_nts;
    for (std::size_t i = 0; i < eval.size(); ++i) {
      const double d = duration[i];
      const std::size_t k = table.bucket_of(d);
      const double value = options.vvp_on_prediction ? s.head[i] : logy[i];
      const double ind = table.buckets[k].defined() ? signals::vvp95(value, table, d) : 0.0;
      auto it = per_item.find(eval.rows[i].item_id);
      const double avg = it == per_item.end() ? global : it->second.first / it->second.second;
      const double pred_ts = std::expm1(s.head[i]);
      vvp.push_back(ind);
      vvp_nts.push_back(ind * signals::nts(pred_ts, options.nts_pskip, avg, options.nts_c));
    }
    add("watch_time", "y", y);
    add("watch_time", "log_y", logy);
    add("watch_time", "p", s.p);
    add("watch_time", "vvp95", vvp);
    add("watch_time", "vvp95_x_nts", vvp_nts);
    add("watch_time", "rps", rps);
  }
  {
    const TaskScores s = score_task(eval, ranker, loop_branch);
    std::vector<double> y, p, rps;
    for (std::size_t i = 0; i < eval.size(); ++i) {
      y.push_back(eval.rows[i].loop);
      p.push_back(ranker::sigmoid(s.head[i]));
      rps.push_back(signals::rps(s.p[i], s.est.mean[i], std::sqrt(s.est.variance[i])));
    }
    add("loop", "y", y);
    add("loop", "p", p);
    add("loop", "rps", rps);
  }
  return rows;
}

// ---------------------------------------------------------------------------

std::vector<BucketFit> distribution_fit_by_bucket(const Dataset& data, const RankerModel& ranker,
                                                  const MbdBranch& branch,
                                                  const std::vector<double>& edges,
                                                  const std::string& attribute) {
  signals::check_edges(edges);
  const TaskScores s = score_task(data, ranker, branch);
  const std::size_t col = data.schema.index_of(attribute);
  signals::BucketTable layout;
  layout.edges = edges;
  layout.buckets.resize(edges.size() - 1);
  std::vector<std::vector<std::size_t>> members(layout.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    members[layout.bucket_of(data.rows[i].features[col])].push_back(i);
  }
  std::vector<BucketFit> out;
  for (std::size_t k = 0; k < layout.size(); ++k) {
    BucketFit f;
    f.lower = edges[k];
    f.upper = edges[k + 1];
    f.label = edge_label(f.lower, f.upper);
    f.count = members[k].size();
    if (!members[k].empty()) {
      std::vector<double> p, mu, var;
      for (std::size_t i : members[k]) {
        p.push_back(s.p[i]);
        mu.push_back(s.est.mean[i]);
        var.push_back(s.est.variance[i]);
      }
      f.mean_p = mean(p);
      f.var_p = pop_var(p);
      f.mean_mu = mean(mu);
      f.mean_var = mean(var);
    }
    out.push_back(f);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<EfficiencyRow> slate_efficiency(const Dataset& candidates,
                                            const std::vector<double>& control_score,
                                            const std::vector<double>& treatment_score,
                                            const SlateOptions& options) {
  const std::size_t n = candidates.size();
  if (control_score.size() != n || treatment_score.size() != n) {
    throw std::invalid_argument("slate_efficiency: one score per candidate required");
  }
  signals::check_edges(options.edges);
  if (options.labels.size() + 1 != options.edges.size()) {
    throw std::invalid_argument("slate_efficiency: need one label per bucket");
  }
  if (options.slate_size == 0 || options.top_k == 0 || options.top_k > options.slate_size) {
    throw std::invalid_argument("slate_efficiency: need 0 < top_k <= slate_size");
  }
  const std::size_t col = candidates.schema.index_of(kDurationColumn);
  signals::BucketTable layout;
  layout.edges = options.edges;
  layout.buckets.resize(options.labels.size());
  const std::size_t nb = layout.size();
  std::vector<double> cvv(nb), cwt(nb), tvv(nb), twt(nb);

  auto select = [&](std::size_t begin, std::size_t end, const std::vector<double>& score,
                    std::vector<double>& vv, std::vector<double>& wt) {
    std::vector<std::size_t> idx(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
    for (std::size_t j = 0; j < options.top_k; ++j) {
      const Interaction& r = candidates.rows[idx[j]];
      const std::size_t k = layout.bucket_of(r.features[col]);
      vv[k] += 1.0;
      wt[k] += r.watch_time;
    }
  };
  for (std::size_t begin = 0; begin + options.slate_size <= n; begin += options.slate_size) {
    select(begin, begin + options.slate_size, control_score, cvv, cwt);
    select(begin, begin + options.slate_size, treatment_score, tvv, twt);
  }
  return efficiency_analysis(options.labels, cvv, cwt, tvv, twt);
}

// ---------------------------------------------------------------------------

synthenv::BiasContext context_of(const MbdBranch& branch, const FeatureSchema& schema,
                                 const Interaction& row) {
  synthenv::BiasContext ctx;
  for (const std::string& c : branch.spec().features.columns) {
    ctx[c] = row.features[schema.index_of(c)];
  }
  return ctx;
}

synthenv::MomentEstimate oracle_prediction_moments(const synthenv::GeneratorConfig& config,
                                                   const RankerModel& ranker,
                                                   const MbdBranch& branch,
                                                   const synthenv::BiasContext& context,
                                                   std::size_t n_mc, std::uint64_t seed) {
  const std::size_t t = ranker.task_index(branch.spec().task);
  Dataset draws{ranker.schema(), synthenv::sample_conditional(config, context, n_mc, seed)};
  const std::vector<double> heads = ranker.predict_outputs(draws)[t];
  std::vector<double> p;
  p.reserve(heads.size());
  for (double h : heads) p.push_back(branch.prediction_target(h));
  return synthenv::moments(p);
}

// ---------------------------------------------------------------------------

std::vector<StalenessPoint> staleness_experiment(const Dataset& drifting,
                                                 const signals::BucketTable& snapshot,
                                                 RankerModel& ranker,
                                                 numerics::Optimizer& ranker_optimizer,
                                                 MbdBranch& branch,
                                                 const StalenessOptions& options) {
  if (branch.spec().space != mbd::Space::kLog1p) {
    throw std::invalid_argument("staleness_experiment: the branch must model log1p watch time");
  }
  const std::size_t stride = std::max<std::size_t>(options.holdout_stride, 2);
  std::uint32_t last = 0;
  for (const Interaction& r : drifting.rows) last = std::max(last, r.timestamp);
  std::vector<Dataset> fit(last + 1, Dataset{drifting.schema, {}});
  std::vector<Dataset> held(last + 1, Dataset{drifting.schema, {}});
  std::vector<std::size_t> seen(last + 1, 0);
  for (const Interaction& r : drifting.rows) {
    (seen[r.timestamp]++ % stride == 0 ? held : fit)[r.timestamp].rows.push_back(r);
  }
  const std::size_t col = drifting.schema.index_of(snapshot.attribute);

  std::vector<StalenessPoint> series;
  for (std::uint32_t t = 0; t <= last; ++t) {
    if (t > 0 && !fit[t].empty()) {
      mbd::JointOptions jo;
      jo.steps = options.steps_per_index;
      jo.batch_size = options.batch_size;
      jo.seed = options.seed * 7919ULL + t;
      mbd::train_joint(ranker, ranker_optimizer, branch, fit[t], jo);
      if (options.catchup.steps > 0) {
        mbd::FitOptions fo = options.catchup;
        fo.seed = jo.seed + 1;
        Dataset pool{drifting.schema, {}};
        const std::size_t window = std::max<std::size_t>(options.catchup_window, 1);
        for (std::size_t u = t + 1 > window ? t + 1 - window : 0; u <= t; ++u) {
          pool.rows.insert(pool.rows.end(), fit[u].rows.begin(), fit[u].rows.end());
        }
        mbd::train_branch(branch, ranker, pool, fo);
      }
    }
    StalenessPoint pt;
    pt.index = t;
    pt.count = held[t].size();
    if (!held[t].empty()) {
      const TaskScores s = score_task(held[t], ranker, branch);
      double z = 0.0, r = 0.0;
      std::size_t nz = 0;
      for (std::size_t i = 0; i < held[t].size(); ++i) {
        const std::size_t k = snapshot.bucket_of(held[t].rows[i].features[col]);
        if (snapshot.buckets[k].defined()) {
          z += signals::naive_correction(s.p[i], snapshot, k, signals::CorrectionForm::kZ);
          ++nz;
        }
        r += signals::rps(s.p[i], s.est.mean[i], std::sqrt(s.est.variance[i]));
      }
      if (nz > 0) pt.frozen_mean_z = z / static_cast<double>(nz);
      pt.mbd_mean_rps = r / static_cast<double>(held[t].size());
    }
    series.push_back(pt);
  }
  return series;
}

std::vector<double> drift_ramp(std::size_t n, double end) {
  if (n == 0) throw std::invalid_argument("drift_ramp: need at least one index");
  std::vector<double> d(n, 1.0);
  for (std::size_t i = 1; i < n; ++i) {
    d[i] = 1.0 + (end - 1.0) * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  return d;
}

std::vector<StalenessPoint> run_staleness(const synthenv::GeneratorConfig& config,
                                          const StalenessSetup& setup) {
  config.validate();
  const synthenv::Population pop = synthenv::make_population(config);

  synthenv::GeneratorConfig warm_cfg = config;
  warm_cfg.seed = config.seed + 1;
  warm_cfg.drift = {config.drift.front()};
  warm_cfg.num_interactions = setup.warmup_rows;
  Dataset warm = synthenv::generate(warm_cfg, pop);
  fit_normalization(warm.schema, warm.rows);

  synthenv::GeneratorConfig drift_cfg = config;
  drift_cfg.num_interactions = setup.rows_per_index * config.drift.size();
  Dataset drifting = synthenv::generate(drift_cfg, pop);
  drifting.schema = warm.schema;

  RankerModel ranker(warm.schema, ranker::default_tasks(), ranker::RankerConfig{});
  numerics::Optimizer opt({}, ranker.params());
  ranker::TrainOptions to;
  to.epochs = setup.ranker_epochs;
  ranker::train(ranker, warm, opt, to);
  opt.set_learning_rate(setup.incremental_lr);

  mbd::BranchSpec spec;
  spec.task = "watch_time";
  spec.features = mbd::make_bias_set("duration", setup.bias_tokens, warm.schema);
  spec.space = mbd::Space::kLog1p;
  MbdBranch branch(spec, warm.schema);
  mbd::train_branch(branch, ranker, warm, setup.branch_fit);

  const signals::BucketTable snapshot = signals::build_bucket_table(
      warm, kDurationColumn, setup.edges,
      [](const Interaction& r) { return std::log1p(r.watch_time); }, 0);
  return staleness_experiment(drifting, snapshot, ranker, opt, branch, setup.options);
}

// ---------------------------------------------------------------------------

void write_signal_quality(std::ostream& out, const std::vector<SignalQuality>& rows,
                          const std::vector<std::string>& comments) {
  write_comments(out, comments);
  out << "branch,task,space,count,bias_ranker,bias_mbd,nll_cluster,nll_mbd,rho_trend,"
         "rho_uncertainty,alignment_buckets\n";
  for (const SignalQuality& q : rows) {
    out << q.branch << "," << q.task << "," << q.space << "," << q.count << ","
        << format_fixed(q.bias_ranker) << "," << format_fixed(q.bias_mbd) << ","
        << format_fixed(q.nll_cluster) << "," << format_fixed(q.nll_mbd) << ","
        << format_fixed(q.rho_trend) << "," << format_fixed(q.rho_uncertainty) << "," << q.alignment_points << "\n";
  }
}

void write_correlation(std::ostream& out, const std::vector<CorrelationRow>& rows,
                       const std::vector<std::string>& comments) {
  write_comments(out, comments);
  out << "task,signal,rho_duration,count\n";
  for (const CorrelationRow& r : rows) {
    out << r.task << "," << r.signal << "," << format_fixed(r.rho) << "," << r.count << "\n";
  }
}

void write_efficiency(std::ostream& out, const std::vector<EfficiencyReportRow>& rows,
                      const std::vector<std::string>& comments) {
  write_comments(out, comments);
  out << "source,bucket,pct_wt,pct_vv,ratio_pct,flag,reproduced\n";
  for (const EfficiencyReportRow& r : rows) {
    out << r.source << "," << r.row.bucket << "," << format_fixed(r.row.pct_wt, 2) << ","
        << format_fixed(r.row.pct_vv, 2) << "," << format_fixed(r.row.ratio) << ","
        << r.row.flag << ",";
    if (r.reproduced) out << (*r.reproduced ? "yes" : "no");
    out << "\n";
  }
}

void write_bucket_fit(std::ostream& out, const std::string& task,
                      const std::vector<BucketFit>& rows,
                      const std::vector<std::string>& comments, bool header) {
  write_comments(out, comments);
  if (header) out << "task,bucket,lower,upper,count,mean_p,var_p,mean_mu,mean_var,flag\n";
  for (const BucketFit& f : rows) {
    out << task << "," << f.label << "," << format_fixed(f.lower) << ","
        << format_fixed(f.upper) << "," << f.count << "," << format_fixed(f.mean_p) << ","
        << format_fixed(f.var_p) << "," << format_fixed(f.mean_mu) << ","
        << format_fixed(f.mean_var) << "," << (f.empty() ? "empty" : "") << "\n";
  }
}

void write_staleness(std::ostream& out, const std::vector<StalenessPoint>& rows,
                     const std::vector<std::string>& comments) {
  write_comments(out, comments);
  out << "index,count,frozen_mean_z,mbd_mean_rps\n";
  for (const StalenessPoint& p : rows) {
    out << p.index << "," << p.count << "," << format_fixed(p.frozen_mean_z) << ","
        << format_fixed(p.mbd_mean_rps) << "\n";
  }
}

std::vector<EfficiencyReportRow> published_efficiency_report() {
  std::vector<EfficiencyReportRow> out;
  for (const PublishedEfficiency& p : published_efficiency()) {
    EfficiencyReportRow r;
    r.source = "published";
    r.row.bucket = p.bucket;
    r.row.pct_wt = p.pct_wt;
    r.row.pct_vv = p.pct_vv;
    r.row.ratio = efficiency_ratio(p.pct_wt, p.pct_vv);
    if (p.lower_bound) r.row.flag = "lower_bound";
    r.reproduced = reproduces(p);
    out.push_back(r);
  }
  return out;
}

}  // namespace mbdlab::eval
