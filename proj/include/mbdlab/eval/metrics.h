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

#ifndef MBDLAB_EVAL_METRICS_H_
#define MBDLAB_EVAL_METRICS_H_

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mbdlab::eval {

// mean(a - b). Throws std::invalid_argument on empty or unequal inputs.
double bias(std::span<const double> a, std::span<const double> b);

// Mean of (p - mu)^2 / (2 var) + log(var) / 2. Throws std::invalid_argument
// if any var <= 0 or the lengths differ.
double gaussian_nll(std::span<const double> p, std::span<const double> mu,
                    std::span<const double> var);

// Pearson coefficient; nullopt if fewer than two points or either series has
// zero variance. Throws std::invalid_argument on unequal lengths.
std::optional<double> pearson(std::span<const double> a, std::span<const double> b);

// A scalar that may be undefined, with its sample count.
struct Metric {
  std::string name;
  std::optional<double> value;
  std::size_t count = 0;
};

struct SeriesPoint {
  std::string label;
  std::optional<double> value;
  std::size_t count = 0;
};

struct MetricReport {
  std::vector<Metric> metrics;
  std::map<std::string, std::vector<SeriesPoint>> series;
  std::map<std::string, std::string> provenance;

  void add(std::string name, std::optional<double> value, std::size_t count);
  // nullptr if absent.
  const Metric* find(const std::string& name) const;
};

// "0.1235", or "undefined" for nullopt. Rounds to `digits` decimals.
std::string format_fixed(std::optional<double> v, int digits = 4);

// ---------------------------------------------------------------------------
// Engagement efficiency.

// 100 * pct_wt / pct_vv; nullopt when pct_vv == 0.
std::optional<double> efficiency_ratio(double pct_wt, double pct_vv);

struct EfficiencyRow {
  std::string bucket;
  std::optional<double> pct_wt;  // percent change, treatment vs control
  std::optional<double> pct_vv;
  std::optional<double> ratio;   // percent
  std::string flag;              // empty, "zero_control" or "zero_vv_shift"
};

// Per-bucket percentage shifts and their ratio. Throws std::invalid_argument
// if the spans differ in length.
std::vector<EfficiencyRow> efficiency_analysis(const std::vector<std::string>& buckets,
                                               std::span<const double> control_vv,
                                               std::span<const double> control_wt,
                                               std::span<const double> treatment_vv,
                                               std::span<const double> treatment_wt);

struct PublishedEfficiency {
  std::string bucket;
  double pct_wt;
  double pct_vv;
  double ratio;      // percent as printed
  bool lower_bound;  // printed as ">ratio%"
};

// The thirteen length buckets of the published efficiency table.
const std::vector<PublishedEfficiency>& published_efficiency();

// Range of 100 * wt / vv when each input is only known to +-half_width
// (a value printed with two decimals). Requires vv's interval to exclude 0.
struct Interval {
  double lo;
  double hi;
};
Interval ratio_interval(double pct_wt, double pct_vv, double half_width = 0.005);

// The printed ratio lies within the interval widened by half a percent (the
// printed integer rounding); ">" entries need the interval to reach past it.
bool reproduces(const PublishedEfficiency& row, double half_width = 0.005);

}  // namespace mbdlab::eval

#endif  // MBDLAB_EVAL_METRICS_H_
