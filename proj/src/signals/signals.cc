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

#include "mbdlab/signals/signals.h"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "mbdlab/errors.h"

namespace mbdlab::signals {

namespace {

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw std::invalid_argument(std::string(what) + " is not finite");
  }
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

double rps(double p, double mu, double sigma, double sigma_floor) {
  require_finite(p, "rps: prediction");
  require_finite(mu, "rps: mean");
  require_finite(sigma, "rps: sigma");
  return (p - mu) / std::max(sigma, sigma_floor);
}

double rps(double p, const mbd::DistributionEstimate& est, double sigma_floor) {
  return rps(p, est.mean, est.sigma(), sigma_floor);
}

double percentile(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double vm_score(std::span<const double> predictions, std::span<const double> weights) {
  if (predictions.size() != weights.size()) {
    throw std::invalid_argument("vm_score: " + std::to_string(predictions.size()) +
                                " predictions but " + std::to_string(weights.size()) +
                                " weights");
  }
  double s = 0.0;
  for (std::size_t t = 0; t < weights.size(); ++t) s += weights[t] * predictions[t];
  return s;
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kNone:
      return "none";
    case Strategy::kAdditive:
      return "additive";
    case Strategy::kFilter:
      return "filter";
    case Strategy::kReweight:
      return "reweight";
  }
  return "";
}

std::string to_string(ReweightForm f) {
  return f == ReweightForm::kPower ? "power" : "sigmoid";
}

Strategy strategy_from_string(const std::string& s) {
  if (s == "none") return Strategy::kNone;
  if (s == "additive") return Strategy::kAdditive;
  if (s == "filter") return Strategy::kFilter;
  if (s == "reweight") return Strategy::kReweight;
  throw std::invalid_argument("unknown strategy '" + s + "'");
}

ReweightForm reweight_form_from_string(const std::string& s) {
  if (s == "power") return ReweightForm::kPower;
  if (s == "sigmoid") return ReweightForm::kSigmoid;
  throw std::invalid_argument("unknown reweight form '" + s + "'");
}

void VmPolicy::validate() const {
  for (double w : weights) require_finite(w, "policy weight");
  if (!(alpha >= 1.0 && alpha <= 3.0)) throw std::invalid_argument("alpha must lie in [1, 3]");
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw std::invalid_argument("beta must be >= 0");
  if (!(boost_weight >= 0.0) || !std::isfinite(boost_weight)) {
    throw std::invalid_argument("boost weight must be >= 0");
  }
  require_finite(reweight_exponent, "reweight exponent");
  if (!(sigma_floor > 0.0)) throw std::invalid_argument("sigma floor must be > 0");
}

Adjusted integrate(double s_final, double rps_value, const VmPolicy& policy, double p,
                   double mu) {
  switch (policy.strategy) {
    case Strategy::kNone:
      return {s_final, false};
    case Strategy::kAdditive:
      return {s_final + policy.boost_weight * std::max(0.0, rps_value - policy.tau_high()),
              false};
    case Strategy::kFilter:
      return {rps_value >= policy.tau_low() ? s_final : 0.0, false};
    case Strategy::kReweight:
      if (policy.reweight_form == ReweightForm::kPower) {
        if (std::isfinite(p) && std::isfinite(mu) && mu > 0.0 && p >= 0.0) {
          return {s_final * std::pow(p / mu, policy.reweight_exponent), false};
        }
        return {s_final * sigmoid(rps_value), true};
      }
      return {s_final * sigmoid(rps_value), false};
  }
  return {s_final, false};
}

// ---------------------------------------------------------------------------

void check_edges(std::span<const double> edges) {
  if (edges.size() < 2) throw std::invalid_argument("bucket edges need at least two values");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    require_finite(edges[i], "bucket edge");
    if (i > 0 && !(edges[i] > edges[i - 1])) {
      throw std::invalid_argument("bucket edges must be strictly increasing");
    }
  }
}

std::vector<double> log_edges(double lo, double hi, std::size_t n) {
  if (!(lo > 0.0 && hi > lo) || n == 0) throw std::invalid_argument("log_edges: bad range");
  std::vector<double> e(n + 1);
  const double a = std::log(lo), b = std::log(hi);
  for (std::size_t i = 0; i <= n; ++i) e[i] = std::exp(a + (b - a) * i / n);
  e.front() = lo;
  e.back() = hi;
  return e;
}

std::size_t BucketTable::bucket_of(double value) const {
  const std::size_t k = buckets.size();
  // First interior edge greater than value.
  auto it = std::upper_bound(edges.begin() + 1, edges.end() - 1, value);
  return std::min<std::size_t>(static_cast<std::size_t>(it - (edges.begin() + 1)), k - 1);
}

const BucketStats& BucketTable::stats(std::size_t bucket) const {
  const BucketStats& s = buckets.at(bucket);
  if (!s.defined()) {
    throw SparsityError("bucket " + std::to_string(bucket) + " of '" + attribute +
                        "' has no data");
  }
  return s;
}

double nearest_rank(std::vector<double> values, int pct) {
  if (values.empty()) throw SparsityError("percentile of an empty set");
  if (pct <= 0 || pct > 100) throw std::invalid_argument("percentile must lie in (0, 100]");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  // ceil(pct * n / 100) in integers, 1-based.
  const std::size_t rank = (static_cast<std::size_t>(pct) * n + 99) / 100;
  return values[std::max<std::size_t>(rank, 1) - 1];
}

BucketTable build_bucket_table(std::span<const double> attribute_values,
                               std::span<const double> labels, std::vector<double> edges,
                               std::string attribute, std::uint32_t snapshot) {
  if (attribute_values.size() != labels.size()) {
    throw std::invalid_argument("bucket table: attribute and label lengths differ");
  }
  check_edges(edges);
  BucketTable t;
  t.attribute = std::move(attribute);
  t.edges = std::move(edges);
  t.snapshot = snapshot;
  t.buckets.resize(t.edges.size() - 1);
  std::vector<std::vector<double>> members(t.buckets.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    members[t.bucket_of(attribute_values[i])].push_back(labels[i]);
  }
  for (std::size_t k = 0; k < members.size(); ++k) {
    const std::vector<double>& v = members[k];
    BucketStats& s = t.buckets[k];
    s.count = v.size();
    if (v.empty()) {
      s.mean = s.variance = s.p95 = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    double sum = 0.0;
    for (double x : v) sum += x;
    s.mean = sum / v.size();
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.variance = ss / v.size();
    s.p95 = nearest_rank(v, 95);
  }
  return t;
}

BucketTable build_bucket_table(const Dataset& data, const std::string& attribute,
                               std::vector<double> edges,
                               const std::function<double(const Interaction&)>& label,
                               std::uint32_t snapshot) {
  const std::size_t col = data.schema.index_of(attribute);
  std::vector<double> attr, y;
  attr.reserve(data.size());
  y.reserve(data.size());
  for (const Interaction& r : data.rows) {
    attr.push_back(r.features[col]);
    y.push_back(label(r));
  }
  return build_bucket_table(attr, y, std::move(edges), attribute, snapshot);
}

double naive_correction(double y, const BucketTable& table, std::size_t bucket,
                        CorrectionForm form, double sigma_floor) {
  const BucketStats& s = table.stats(bucket);
  if (form == CorrectionForm::kMean) return y - s.mean;
  return (y - s.mean) / std::max(std::sqrt(s.variance), sigma_floor);
}

double vvp95(double value, const BucketTable& table, double attribute_value) {
  return value >= table.stats(table.bucket_of(attribute_value)).p95 ? 1.0 : 0.0;
}

double nts(double pred_ts, double pskip, double avg7d, double c) {
  if (!(pskip >= 0.0 && pskip <= 1.0)) throw std::invalid_argument("nts: pskip must lie in [0, 1]");
  if (!(c > 0.0)) throw std::invalid_argument("nts: c must be > 0");
  return sigmoid(c * (pred_ts * (1.0 - pskip) - avg7d));
}

void write_bucket_table(std::ostream& out, const BucketTable& t) {
  out << "# attribute=" << t.attribute << "\n";
  out << "bucket,lower,upper,count,mean,variance,p95,snapshot\n";
  for (std::size_t k = 0; k < t.size(); ++k) {
    const BucketStats& s = t.buckets[k];
    out << k << "," << format_double(t.edges[k]) << "," << format_double(t.edges[k + 1]) << ","
        << s.count << ",";
    if (s.defined()) {
      out << format_double(s.mean) << "," << format_double(s.variance) << ","
          << format_double(s.p95);
    } else {
      out << "nan,nan,nan";
    }
    out << "," << t.snapshot << "\n";
  }
}

BucketTable read_bucket_table(std::istream& in) {
  BucketTable t;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("# attribute=", 0) == 0) {
      t.attribute = line.substr(12);
      continue;
    }
    if (line.front() == '#') continue;
    if (!header) {
      if (line != "bucket,lower,upper,count,mean,variance,p95,snapshot") {
        throw std::runtime_error("bucket table: unexpected header '" + line + "'");
      }
      header = true;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 8) throw std::runtime_error("bucket table: bad row '" + line + "'");
    if (t.edges.empty()) t.edges.push_back(std::stod(cells[1]));
    t.edges.push_back(std::stod(cells[2]));
    BucketStats s;
    s.count = std::stoul(cells[3]);
    s.mean = std::strtod(cells[4].c_str(), nullptr);
    s.variance = std::strtod(cells[5].c_str(), nullptr);
    s.p95 = std::strtod(cells[6].c_str(), nullptr);
    t.snapshot = static_cast<std::uint32_t>(std::stoul(cells[7]));
    t.buckets.push_back(s);
  }
  check_edges(t.edges);
  return t;
}

}  // namespace mbdlab::signals
