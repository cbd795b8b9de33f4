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

#include "mbdlab/eval/metrics.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace mbdlab::eval {

namespace {

void check_lengths(std::size_t a, std::size_t b, const char* op) {
  if (a != b) {
    throw std::invalid_argument(std::string(op) + ": lengths differ (" + std::to_string(a) +
                                " vs " + std::to_string(b) + ")");
  }
}

}  // namespace

double bias(std::span<const double> a, std::span<const double> b) {
  check_lengths(a.size(), b.size(), "bias");
  if (a.empty()) throw std::invalid_argument("bias: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] - b[i];
  return s / static_cast<double>(a.size());
}

double gaussian_nll(std::span<const double> p, std::span<const double> mu,
                    std::span<const double> var) {
  check_lengths(p.size(), mu.size(), "gaussian_nll");
  check_lengths(p.size(), var.size(), "gaussian_nll");
  if (p.empty()) throw std::invalid_argument("gaussian_nll: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(var[i] > 0.0)) {
      throw std::invalid_argument("gaussian_nll: variance must be > 0 (row " +
                                  std::to_string(i) + ")");
    }
    const double r = p[i] - mu[i];
    s += r * r / (2.0 * var[i]) + 0.5 * std::log(var[i]);
  }
  return s / static_cast<double>(p.size());
}

std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
  check_lengths(a.size(), b.size(), "pearson");
  const std::size_t n = a.size();
  if (n < 2) return std::nullopt;
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

void MetricReport::add(std::string name, std::optional<double> value, std::size_t count) {
  metrics.push_back({std::move(name), value, count});
}

const Metric* MetricReport::find(const std::string& name) const {
  for (const Metric& m : metrics) {
    if (m.name == name) return &m;
  }
  return nullptr;
}

std::string format_fixed(std::optional<double> v, int digits) {
  if (!v || !std::isfinite(*v)) return "undefined";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, *v);
  std::string s = buf;
  // Avoid printing "-0.0000".
  if (s.find_first_not_of("-0.") == std::string::npos && s.front() == '-') s.erase(0, 1);
  return s;
}

std::optional<double> efficiency_ratio(double pct_wt, double pct_vv) {
  if (pct_vv == 0.0) return std::nullopt;
  return 100.0 * pct_wt / pct_vv;
}

std::vector<EfficiencyRow> efficiency_analysis(const std::vector<std::string>& buckets,
                                               std::span<const double> control_vv,
                                               std::span<const double> control_wt,
                                               std::span<const double> treatment_vv,
                                               std::span<const double> treatment_wt) {
  const std::size_t n = buckets.size();
  check_lengths(n, control_vv.size(), "efficiency_analysis");
  check_lengths(n, control_wt.size(), "efficiency_analysis");
  check_lengths(n, treatment_vv.size(), "efficiency_analysis");
  check_lengths(n, treatment_wt.size(), "efficiency_analysis");
  std::vector<EfficiencyRow> rows;
  for (std::size_t k = 0; k < n; ++k) {
    EfficiencyRow r;
    r.bucket = buckets[k];
    if (!(control_vv[k] > 0.0) || !(control_wt[k] > 0.0)) {
      r.flag = "zero_control";
      rows.push_back(r);
      continue;
    }
    r.pct_vv = 100.0 * (treatment_vv[k] - control_vv[k]) / control_vv[k];
    r.pct_wt = 100.0 * (treatment_wt[k] - control_wt[k]) / control_wt[k];
    r.ratio = efficiency_ratio(*r.pct_wt, *r.pct_vv);
    if (!r.ratio) r.flag = "zero_vv_shift";
    rows.push_back(r);
  }
  return rows;
}

const std::vector<PublishedEfficiency>& published_efficiency() {
  static const std::vector<PublishedEfficiency> rows = {
      {"0-5s", -0.64, -0.83, 77, false},      {"5-10s", -0.75, -0.80, 94, false},
      {"10-15s", -0.62, -0.77, 81, false},    {"15-30s", -0.19, -0.40, 47, false},
      {"30-45s", 0.43, 0.12, 350, false},     {"45-60s", 0.60, 0.27, 222, false},
      {"60-90s", 0.77, 0.39, 198, false},     {"90-180s", 0.85, 0.41, 209, false},
      {"3-5m", 1.05, 0.55, 191, false},       {"5-10m", 0.73, 0.13, 562, false},
      {"10-30m", 0.31, -0.23, -135, false},   {"30-60m", 0.53, 0.25, 200, true},
      {"60m+", -0.65, -0.46, 143, false},
  };
  return rows;
}

Interval ratio_interval(double pct_wt, double pct_vv, double half_width) {
  const double vlo = pct_vv - half_width, vhi = pct_vv + half_width;
  if (vlo <= 0.0 && vhi >= 0.0) {
    throw std::invalid_argument("ratio_interval: view shift interval contains zero");
  }
  double lo = INFINITY, hi = -INFINITY;
  for (double w : {pct_wt - half_width, pct_wt + half_width}) {
    for (double v : {vlo, vhi}) {
      const double r = 100.0 * w / v;
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
  }
  return {lo, hi};
}

bool reproduces(const PublishedEfficiency& row, double half_width) {
  const Interval iv = ratio_interval(row.pct_wt, row.pct_vv, half_width);
  if (row.lower_bound) return iv.hi > row.ratio;
  return row.ratio >= iv.lo - 0.5 && row.ratio <= iv.hi + 0.5;
}

}  // namespace mbdlab::eval
