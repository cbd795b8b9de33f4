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

#include "mbdlab/cli/config.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "mbdlab/errors.h"

namespace mbdlab::cli {

using nlohmann::json;

namespace {

std::string idx(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

std::uint64_t as_u64(const json& v, const std::string& path) {
  if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
    throw ConfigError(path, "expected a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

double as_double(const json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ConfigError(path, "must be finite");
  return d;
}

bool as_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) throw ConfigError(path, "expected true or false");
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError(path, "expected a string");
  return v.get<std::string>();
}

template <typename T, typename Fn>
std::vector<T> as_list(const json& v, const std::string& path, Fn&& each) {
  if (!v.is_array()) throw ConfigError(path, "expected an array");
  std::vector<T> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(each(v[i], idx(path, i)));
  return out;
}

std::vector<std::size_t> as_sizes(const json& v, const std::string& path) {
  return as_list<std::size_t>(v, path, [](const json& e, const std::string& p) {
    const std::uint64_t n = as_u64(e, p);
    if (n == 0) throw ConfigError(p, "layer widths must be > 0");
    return static_cast<std::size_t>(n);
  });
}

std::vector<std::string> as_strings(const json& v, const std::string& path) {
  return as_list<std::string>(v, path, as_string);
}

// An object whose fields are read once each; leftovers are typos.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "config" : path_, "expected an object");
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  const json& need(const std::string& key) {
    const json* v = find(key);
    if (!v) throw ConfigError(at(key), "missing required field");
    return *v;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(at(it.key()), "unknown field");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void positive(double v, const std::string& path) {
  if (!(v > 0.0)) throw ConfigError(path, "must be > 0");
}

void at_least_one(std::uint64_t v, const std::string& path) {
  if (v == 0) throw ConfigError(path, "must be >= 1");
}

synthenv::GeneratorConfig read_generator(const json& v, const std::string& base_dir) {
  if (v.is_string()) {
    const std::filesystem::path p = std::filesystem::path(base_dir) / v.get<std::string>();
    std::ifstream in(p);
    if (!in) throw ConfigError("generator", "cannot open '" + p.string() + "'");
    json g;
    try {
      g = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("generator", "'" + p.string() + "': " + e.what());
    }
    return synthenv::generator_config_from_json(g, "generator");
  }
  return synthenv::generator_config_from_json(v, "generator");
}

std::vector<ranker::TaskSpec> read_tasks(const json& v) {
  std::vector<ranker::TaskSpec> tasks;
  std::set<std::string> names;
  const std::string path = "tasks";
  if (!v.is_array() || v.empty()) throw ConfigError(path, "expected a non-empty array");
  for (std::size_t i = 0; i < v.size(); ++i) {
    Fields f(v[i], idx(path, i));
    const std::string name = as_string(f.need("name"), f.at("name"));
    if (!is_known_label(name)) {
      throw ConfigError(f.at("name"), "unknown label '" + name + "' (watch_time, like, loop)");
    }
    if (!names.insert(name).second) throw ConfigError(f.at("name"), "duplicate task");
    const std::string kind = as_string(f.need("kind"), f.at("kind"));
    if (kind == "regression") {
      tasks.push_back(ranker::regression_task(name));
    } else if (kind == "binary") {
      tasks.push_back(ranker::binary_task(name));
    } else {
      throw ConfigError(f.at("kind"), "expected 'regression' or 'binary'");
    }
    f.finish();
  }
  return tasks;
}

RankerSection read_ranker(const json& v) {
  Fields f(v, "ranker");
  RankerSection r;
  if (auto* x = f.find("trunk")) r.model.trunk = as_sizes(*x, f.at("trunk"));
  if (r.model.trunk.empty()) throw ConfigError(f.at("trunk"), "needs at least one layer");
  if (auto* x = f.find("head_hidden")) r.model.head_hidden = as_sizes(*x, f.at("head_hidden"));
  if (auto* x = f.find("epochs")) r.train.epochs = as_u64(*x, f.at("epochs"));
  at_least_one(r.train.epochs, f.at("epochs"));
  if (auto* x = f.find("batch_size")) r.train.batch_size = as_u64(*x, f.at("batch_size"));
  at_least_one(r.train.batch_size, f.at("batch_size"));
  if (auto* x = f.find("learning_rate")) r.learning_rate = as_double(*x, f.at("learning_rate"));
  positive(r.learning_rate, f.at("learning_rate"));
  if (auto* x = f.find("holdout_every")) r.holdout_every = as_u64(*x, f.at("holdout_every"));
  if (r.holdout_every < 2) throw ConfigError(f.at("holdout_every"), "must be >= 2");
  f.finish();
  return r;
}

BranchConfig read_branch(const json& v, const std::string& path,
                         const std::vector<ranker::TaskSpec>& tasks,
                         const FeatureSchema& schema) {
  Fields f(v, path);
  BranchConfig b;
  b.name = as_string(f.need("name"), f.at("name"));
  if (b.name.empty()) throw ConfigError(f.at("name"), "must not be empty");
  b.spec.task = as_string(f.need("task"), f.at("task"));
  const ranker::TaskSpec* task = nullptr;
  for (const ranker::TaskSpec& t : tasks) {
    if (t.name == b.spec.task) task = &t;
  }
  if (!task) throw ConfigError(f.at("task"), "no task named '" + b.spec.task + "'");

  b.tokens = as_strings(f.need("features"), f.at("features"));
  if (b.tokens.empty()) throw ConfigError(f.at("features"), "needs at least one column");
  for (std::size_t i = 0; i < b.tokens.size(); ++i) {
    for (const std::string& col : mbd::expand_group(schema, b.tokens[i])) {
      if (std::find(schema.names.begin(), schema.names.end(), col) == schema.names.end()) {
        throw ConfigError(idx(f.at("features"), i), "unknown column or group '" + col + "'");
      }
    }
  }
  try {
    b.spec.features = mbd::make_bias_set(b.name, b.tokens, schema);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(f.at("features"), e.what());
  }

  if (auto* x = f.find("hidden")) {
    b.spec.hidden = as_list<std::size_t>(*x, f.at("hidden"), [](const json& e, const std::string& p) {
      const std::uint64_t n = as_u64(e, p);
      if (n == 0) throw ConfigError(p, "layer widths must be > 0");
      return static_cast<std::size_t>(n);
    });
  }
  if (auto* x = f.find("quantiles")) {
    b.spec.quantiles = as_list<double>(*x, f.at("quantiles"), as_double);
  }
  const std::string default_space = task->binary() ? "logit" : "log1p";
  std::string space = default_space;
  if (auto* x = f.find("space")) space = as_string(*x, f.at("space"));
  try {
    b.spec.space = mbd::space_from_string(space);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(f.at("space"), e.what());
  }
  if (task->binary() == (b.spec.space == mbd::Space::kLog1p)) {
    throw ConfigError(f.at("space"), task->binary()
                                         ? "binary tasks use 'probability' or 'logit'"
                                         : "regression tasks use 'log1p'");
  }
  if (auto* x = f.find("target")) {
    try {
      b.spec.target = mbd::target_mode_from_string(as_string(*x, f.at("target")));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(f.at("target"), e.what());
    }
  }
  if (auto* x = f.find("steps")) b.fit.steps = as_u64(*x, f.at("steps"));
  at_least_one(b.fit.steps, f.at("steps"));
  if (auto* x = f.find("batch_size")) b.fit.batch_size = as_u64(*x, f.at("batch_size"));
  if (auto* x = f.find("learning_rate")) {
    b.fit.optimizer.learning_rate = as_double(*x, f.at("learning_rate"));
  }
  positive(b.fit.optimizer.learning_rate, f.at("learning_rate"));
  b.fit.final_lr_fraction = 0.05;
  if (auto* x = f.find("final_lr_fraction")) {
    b.fit.final_lr_fraction = as_double(*x, f.at("final_lr_fraction"));
  }
  if (!(b.fit.final_lr_fraction > 0.0 && b.fit.final_lr_fraction <= 1.0)) {
    throw ConfigError(f.at("final_lr_fraction"), "must lie in (0, 1]");
  }
  try {
    b.spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path, e.what());
  }
  f.finish();
  return b;
}

PolicyConfig read_policy(const json& v, const std::vector<ranker::TaskSpec>& tasks) {
  Fields f(v, "policy");
  PolicyConfig p;
  {
    const std::string wp = f.at("weights");
    Fields w(f.need("weights"), wp);
    for (const ranker::TaskSpec& t : tasks) {
      p.weights[t.name] = as_double(w.need(t.name), w.at(t.name));
      p.vm.weights.push_back(p.weights[t.name]);
    }
    w.finish();
  }
  auto text = [&](const char* key, auto parse, auto& out) {
    if (auto* x = f.find(key)) {
      try {
        out = parse(as_string(*x, f.at(key)));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(f.at(key), e.what());
      }
    }
  };
  text("strategy", signals::strategy_from_string, p.vm.strategy);
  text("reweight_form", signals::reweight_form_from_string, p.vm.reweight_form);
  if (auto* x = f.find("alpha")) p.vm.alpha = as_double(*x, f.at("alpha"));
  if (auto* x = f.find("beta")) p.vm.beta = as_double(*x, f.at("beta"));
  if (auto* x = f.find("boost_weight")) p.vm.boost_weight = as_double(*x, f.at("boost_weight"));
  if (auto* x = f.find("reweight_exponent")) {
    p.vm.reweight_exponent = as_double(*x, f.at("reweight_exponent"));
  }
  if (auto* x = f.find("sigma_floor")) p.vm.sigma_floor = as_double(*x, f.at("sigma_floor"));
  if (!(p.vm.alpha >= 1.0 && p.vm.alpha <= 3.0)) throw ConfigError(f.at("alpha"), "must lie in [1, 3]");
  if (!(p.vm.beta >= 0.0)) throw ConfigError(f.at("beta"), "must be >= 0");
  if (!(p.vm.boost_weight >= 0.0)) throw ConfigError(f.at("boost_weight"), "must be >= 0");
  positive(p.vm.sigma_floor, f.at("sigma_floor"));
  p.rps_branch = as_string(f.need("rps_branch"), f.at("rps_branch"));
  f.finish();
  return p;
}

void check_branch_ref(const ExperimentConfig& c, const std::string& name, const std::string& path,
                      const char* task = nullptr) {
  for (const BranchConfig& b : c.branches) {
    if (b.name != name) continue;
    if (task && b.spec.task != task) {
      throw ConfigError(path, "branch '" + name + "' models '" + b.spec.task + "', expected '" +
                                  task + "'");
    }
    return;
  }
  throw ConfigError(path, "no branch named '" + name + "'");
}

EvalConfig read_eval(const json& v, ExperimentConfig& c, const FeatureSchema& schema) {
  Fields f(v, "eval");
  EvalConfig e;
  if (auto* x = f.find("cluster_buckets")) e.cluster.nll_buckets = as_u64(*x, f.at("cluster_buckets"));
  at_least_one(e.cluster.nll_buckets, f.at("cluster_buckets"));
  if (auto* x = f.find("alignment_buckets")) {
    e.cluster.alignment_buckets = as_u64(*x, f.at("alignment_buckets"));
  }
  if (e.cluster.alignment_buckets < 2) throw ConfigError(f.at("alignment_buckets"), "must be >= 2");
  e.cluster.lo = c.generator.min_duration;
  e.cluster.hi = c.generator.max_duration;

  e.quality_branches = as_strings(f.need("quality_branches"), f.at("quality_branches"));
  for (std::size_t i = 0; i < e.quality_branches.size(); ++i) {
    check_branch_ref(c, e.quality_branches[i], idx(f.at("quality_branches"), i));
  }
  {
    Fields g(f.need("correlation"), f.at("correlation"));
    e.watch_branch = as_string(g.need("watch_branch"), g.at("watch_branch"));
    check_branch_ref(c, e.watch_branch, g.at("watch_branch"), "watch_time");
    if (c.branch(e.watch_branch).spec.space != mbd::Space::kLog1p) {
      throw ConfigError(g.at("watch_branch"), "needs a log1p branch");
    }
    e.loop_branch = as_string(g.need("loop_branch"), g.at("loop_branch"));
    check_branch_ref(c, e.loop_branch, g.at("loop_branch"), "loop");
    std::size_t vvp_buckets = 10;
    if (auto* x = g.find("vvp_buckets")) vvp_buckets = as_u64(*x, g.at("vvp_buckets"));
    at_least_one(vvp_buckets, g.at("vvp_buckets"));
    e.correlation.edges =
        signals::log_edges(c.generator.min_duration, c.generator.max_duration, vvp_buckets);
    if (auto* x = g.find("vvp_on_prediction")) {
      e.correlation.vvp_on_prediction = as_bool(*x, g.at("vvp_on_prediction"));
    }
    if (auto* x = g.find("video_only")) e.correlation.video_only = as_bool(*x, g.at("video_only"));
    if (auto* x = g.find("nts_c")) e.correlation.nts_c = as_double(*x, g.at("nts_c"));
    positive(e.correlation.nts_c, g.at("nts_c"));
    if (auto* x = g.find("nts_pskip")) e.correlation.nts_pskip = as_double(*x, g.at("nts_pskip"));
    if (!(e.correlation.nts_pskip >= 0.0 && e.correlation.nts_pskip <= 1.0)) {
      throw ConfigError(g.at("nts_pskip"), "must lie in [0, 1]");
    }
    g.finish();
  }
  e.fit_branches = as_strings(f.need("fit_branches"), f.at("fit_branches"));
  for (std::size_t i = 0; i < e.fit_branches.size(); ++i) {
    check_branch_ref(c, e.fit_branches[i], idx(f.at("fit_branches"), i));
  }
  if (auto* x = f.find("fit_buckets")) e.fit_buckets = as_u64(*x, f.at("fit_buckets"));
  at_least_one(e.fit_buckets, f.at("fit_buckets"));
  if (auto* x = f.find("slate_size")) e.slate.slate_size = as_u64(*x, f.at("slate_size"));
  if (auto* x = f.find("top_k")) e.slate.top_k = as_u64(*x, f.at("top_k"));
  at_least_one(e.slate.top_k, f.at("top_k"));
  if (e.slate.top_k > e.slate.slate_size) throw ConfigError(f.at("top_k"), "must not exceed slate_size");
  if (auto* x = f.find("rerank_requests")) e.rerank_requests = as_u64(*x, f.at("rerank_requests"));
  at_least_one(e.rerank_requests, f.at("rerank_requests"));

  if (auto* sv = f.find("staleness")) {
    Fields s(*sv, f.at("staleness"));
    StalenessConfig& st = e.staleness;
    if (auto* x = s.find("enabled")) st.enabled = as_bool(*x, s.at("enabled"));
    if (auto* x = s.find("indices")) st.indices = as_u64(*x, s.at("indices"));
    at_least_one(st.indices, s.at("indices"));
    if (auto* x = s.find("end_multiplier")) st.end_multiplier = as_double(*x, s.at("end_multiplier"));
    positive(st.end_multiplier, s.at("end_multiplier"));
    if (auto* x = s.find("rows_per_index")) st.setup.rows_per_index = as_u64(*x, s.at("rows_per_index"));
    if (st.setup.rows_per_index < 10) throw ConfigError(s.at("rows_per_index"), "must be >= 10");
    if (auto* x = s.find("warmup_rows")) st.setup.warmup_rows = as_u64(*x, s.at("warmup_rows"));
    at_least_one(st.setup.warmup_rows, s.at("warmup_rows"));
    if (auto* x = s.find("ranker_epochs")) st.setup.ranker_epochs = as_u64(*x, s.at("ranker_epochs"));
    at_least_one(st.setup.ranker_epochs, s.at("ranker_epochs"));
    if (auto* x = s.find("branch_steps")) st.setup.branch_fit.steps = as_u64(*x, s.at("branch_steps"));
    at_least_one(st.setup.branch_fit.steps, s.at("branch_steps"));
    if (auto* x = s.find("steps_per_index")) {
      st.setup.options.steps_per_index = as_u64(*x, s.at("steps_per_index"));
    }
    if (auto* x = s.find("catchup_steps")) {
      st.setup.options.catchup.steps = as_u64(*x, s.at("catchup_steps"));
    }
    if (auto* x = s.find("catchup_window")) {
      st.setup.options.catchup_window = as_u64(*x, s.at("catchup_window"));
    }
    at_least_one(st.setup.options.catchup_window, s.at("catchup_window"));
    if (auto* x = s.find("incremental_lr")) {
      st.setup.incremental_lr = as_double(*x, s.at("incremental_lr"));
    }
    positive(st.setup.incremental_lr, s.at("incremental_lr"));
    if (auto* x = s.find("features")) {
      st.setup.bias_tokens = as_strings(*x, s.at("features"));
      for (std::size_t i = 0; i < st.setup.bias_tokens.size(); ++i) {
        for (const std::string& col : mbd::expand_group(schema, st.setup.bias_tokens[i])) {
          if (std::find(schema.names.begin(), schema.names.end(), col) == schema.names.end()) {
            throw ConfigError(idx(s.at("features"), i), "unknown column or group '" + col + "'");
          }
        }
      }
    }
    st.setup.edges = signals::log_edges(c.generator.min_duration, c.generator.max_duration, 10);
    s.finish();
  }
  f.finish();
  return e;
}

json canonical(const ExperimentConfig& c) {
  json tasks = json::array();
  for (const ranker::TaskSpec& t : c.tasks) {
    tasks.push_back({{"name", t.name}, {"kind", t.binary() ? "binary" : "regression"}});
  }
  json branches = json::array();
  for (const BranchConfig& b : c.branches) {
    branches.push_back({{"name", b.name},
                        {"task", b.spec.task},
                        {"features", b.tokens},
                        {"columns", b.spec.features.columns},
                        {"hidden", b.spec.hidden},
                        {"quantiles", b.spec.quantiles},
                        {"space", mbd::to_string(b.spec.space)},
                        {"target", mbd::to_string(b.spec.target)},
                        {"steps", b.fit.steps},
                        {"batch_size", b.fit.batch_size},
                        {"learning_rate", b.fit.optimizer.learning_rate},
                        {"final_lr_fraction", b.fit.final_lr_fraction}});
  }
  const signals::VmPolicy& vm = c.policy.vm;
  const EvalConfig& e = c.eval;
  const StalenessConfig& st = e.staleness;
  return json{
      {"seed", c.seed},
      {"generator", synthenv::to_json(c.generator)},
      {"tasks", tasks},
      {"ranker",
       {{"trunk", c.ranker.model.trunk},
        {"head_hidden", c.ranker.model.head_hidden},
        {"epochs", c.ranker.train.epochs},
        {"batch_size", c.ranker.train.batch_size},
        {"learning_rate", c.ranker.learning_rate},
        {"holdout_every", c.ranker.holdout_every}}},
      {"mbd", {{"branches", branches}}},
      {"policy",
       {{"weights", c.policy.weights},
        {"strategy", signals::to_string(vm.strategy)},
        {"alpha", vm.alpha},
        {"beta", vm.beta},
        {"boost_weight", vm.boost_weight},
        {"reweight_exponent", vm.reweight_exponent},
        {"reweight_form", signals::to_string(vm.reweight_form)},
        {"sigma_floor", vm.sigma_floor},
        {"rps_branch", c.policy.rps_branch}}},
      {"eval",
       {{"cluster_buckets", e.cluster.nll_buckets},
        {"alignment_buckets", e.cluster.alignment_buckets},
        {"quality_branches", e.quality_branches},
        {"correlation",
         {{"watch_branch", e.watch_branch},
          {"loop_branch", e.loop_branch},
          {"vvp_buckets", e.correlation.edges.size() - 1},
          {"vvp_on_prediction", e.correlation.vvp_on_prediction},
          {"video_only", e.correlation.video_only},
          {"nts_c", e.correlation.nts_c},
          {"nts_pskip", e.correlation.nts_pskip}}},
        {"fit_branches", e.fit_branches},
        {"fit_buckets", e.fit_buckets},
        {"slate_size", e.slate.slate_size},
        {"top_k", e.slate.top_k},
        {"rerank_requests", e.rerank_requests},
        {"staleness",
         {{"enabled", st.enabled},
          {"indices", st.indices},
          {"end_multiplier", st.end_multiplier},
          {"rows_per_index", st.setup.rows_per_index},
          {"warmup_rows", st.setup.warmup_rows},
          {"ranker_epochs", st.setup.ranker_epochs},
          {"branch_steps", st.setup.branch_fit.steps},
          {"steps_per_index", st.setup.options.steps_per_index},
          {"catchup_steps", st.setup.options.catchup.steps},
          {"catchup_window", st.setup.options.catchup_window},
          {"incremental_lr", st.setup.incremental_lr},
          {"features", st.setup.bias_tokens}}}}}};
}

}  // namespace

const BranchConfig& ExperimentConfig::branch(const std::string& name) const {
  for (const BranchConfig& b : branches) {
    if (b.name == name) return b;
  }
  throw std::out_of_range("no branch named '" + name + "'");
}

ExperimentConfig parse_config(const json& j, const std::string& base_dir,
                              std::optional<std::uint64_t> seed_override) {
  Fields f(j, "");
  ExperimentConfig c;
  if (auto* x = f.find("seed")) c.seed = as_u64(*x, "seed");
  if (seed_override) c.seed = *seed_override;
  if (auto* x = f.find("output_dir")) c.output_dir = as_string(*x, "output_dir");

  c.generator = read_generator(f.need("generator"), base_dir);
  c.generator.seed = c.seed;
  c.generator.validate();
  const FeatureSchema schema = synthenv::synthetic_schema(c.generator.latent_dim);

  c.tasks = read_tasks(f.need("tasks"));
  c.ranker = read_ranker(f.need("ranker"));
  c.ranker.model.seed = c.seed + 1;
  c.ranker.train.seed = c.seed + 2;

  {
    Fields m(f.need("mbd"), "mbd");
    const json& list = m.need("branches");
    const std::string path = m.at("branches");
    if (!list.is_array() || list.empty()) throw ConfigError(path, "expected a non-empty array");
    std::set<std::string> names;
    for (std::size_t i = 0; i < list.size(); ++i) {
      BranchConfig b = read_branch(list[i], idx(path, i), c.tasks, schema);
      if (!names.insert(b.name).second) {
        throw ConfigError(idx(path, i) + ".name", "duplicate branch name '" + b.name + "'");
      }
      b.spec.seed = c.seed + 100 + i;
      b.fit.seed = c.seed + 200 + i;
      c.branches.push_back(std::move(b));
    }
    m.finish();
  }

  c.policy = read_policy(f.need("policy"), c.tasks);
  check_branch_ref(c, c.policy.rps_branch, "policy.rps_branch");
  c.eval = read_eval(f.need("eval"), c, schema);
  c.eval.staleness.setup.options.seed = c.seed + 300;
  f.finish();

  c.resolved = canonical(c);
  c.hash = fnv1a64_hex(c.resolved.dump());
  return c;
}

ExperimentConfig load_config(const std::string& path, std::optional<std::uint64_t> seed_override) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config", std::string("'") + path + "' is not valid JSON: " + e.what());
  }
  const std::string base = std::filesystem::path(path).parent_path().string();
  return parse_config(j, base.empty() ? "." : base, seed_override);
}

std::string fnv1a64_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string provenance(const ExperimentConfig& config) {
  return "mbdlab config_hash=" + config.hash + " seed=" + std::to_string(config.seed);
}

}  // namespace mbdlab::cli
