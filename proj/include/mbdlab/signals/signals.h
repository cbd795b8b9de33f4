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

#ifndef MBDLAB_SIGNALS_SIGNALS_H_
#define MBDLAB_SIGNALS_SIGNALS_H_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mbdlab/mbd/branch.h"
#include "mbdlab/synthenv/dataset.h"

namespace mbdlab::signals {

inline constexpr double kSigmaFloor = 1e-3;

// (p - mu) / max(sigma, floor). Throws std::invalid_argument on non-finite
// input.
double rps(double p, double mu, double sigma, double sigma_floor = kSigmaFloor);
double rps(double p, const mbd::DistributionEstimate& est, double sigma_floor = kSigmaFloor);

// Standard normal CDF.
double percentile(double z);

// sum_t w_t * y_t. Throws std::invalid_argument on a length mismatch.
double vm_score(std::span<const double> predictions, std::span<const double> weights);

enum class Strategy { kNone, kAdditive, kFilter, kReweight };
enum class ReweightForm { kPower, kSigmoid };

std::string to_string(Strategy s);
std::string to_string(ReweightForm f);
Strategy strategy_from_string(const std::string& s);
ReweightForm reweight_form_from_string(const std::string& s);

// Thresholds are in RPS units: tau_high = alpha, tau_low = -beta.
struct VmPolicy {
  std::vector<double> weights;
  Strategy strategy = Strategy::kNone;
  double alpha = 1.5;
  double beta = 1.5;
  double boost_weight = 1.0;
  double reweight_exponent = 1.0;
  ReweightForm reweight_form = ReweightForm::kSigmoid;
  double sigma_floor = kSigmaFloor;

  double tau_high() const { return alpha; }
  double tau_low() const { return -beta; }
  // alpha in [1, 3], beta >= 0, boost >= 0, finite weights.
  void validate() const;
};

struct Adjusted {
  double score = 0.0;
  bool fell_back = false;  // power reweight replaced by the sigmoid form
};

// Applies the policy's strategy. `p` and `mu` are only read by the power
// reweight form; if mu <= 0 (or either is non-finite) that form falls back
// to sigmoid(rps) and reports it.
Adjusted integrate(double s_final, double rps_value, const VmPolicy& policy,
                   double p = 0.0, double mu = 0.0);

// ---------------------------------------------------------------------------
// Bucketized counting.

struct BucketStats {
  std::size_t count = 0;
  double mean = 0.0;
  double variance = 0.0;  // population
  double p95 = 0.0;       // nearest rank
  bool defined() const { return count > 0; }
};

// Buckets k = 0..K-1 cover [edges[k], edges[k+1]); the first and last are
// open-ended, so values outside the edge range fall into the end buckets.
struct BucketTable {
  std::string attribute;
  std::vector<double> edges;
  std::vector<BucketStats> buckets;
  std::uint32_t snapshot = 0;

  std::size_t size() const { return buckets.size(); }
  std::size_t bucket_of(double value) const;
  // Throws SparsityError if the bucket has no data.
  const BucketStats& stats(std::size_t bucket) const;
};

// Validates edges: at least two, finite, strictly increasing.
void check_edges(std::span<const double> edges);
// n + 1 log-spaced edges from lo to hi.
std::vector<double> log_edges(double lo, double hi, std::size_t n);

// Nearest-rank percentile (pct in (0, 100]) of unsorted values.
double nearest_rank(std::vector<double> values, int pct);

BucketTable build_bucket_table(std::span<const double> attribute_values,
                               std::span<const double> labels, std::vector<double> edges,
                               std::string attribute, std::uint32_t snapshot = 0);
// Attribute read from a feature column; labels from `label`.
BucketTable build_bucket_table(const Dataset& data, const std::string& attribute,
                               std::vector<double> edges,
                               const std::function<double(const Interaction&)>& label,
                               std::uint32_t snapshot = 0);

enum class CorrectionForm { kMean, kZ };

// y - mu_k, or (y - mu_k) / max(sigma_k, floor). Throws SparsityError on an
// empty bucket.
double naive_correction(double y, const BucketTable& table, std::size_t bucket,
                        CorrectionForm form, double sigma_floor = kSigmaFloor);

// 1 if value >= the bucket's p95 threshold, else 0.
double vvp95(double value, const BucketTable& table, double attribute_value);

// sigmoid(c * (pred_ts * (1 - pskip) - avg7d)). pskip in [0, 1], c > 0.
double nts(double pred_ts, double pskip, double avg7d, double c);

// Delimiter-separated form:
//   bucket,lower,upper,count,mean,variance,p95,snapshot
// with the attribute name on a leading "# attribute=<name>" line. Empty
// buckets are written with count 0 and "nan" statistics.
void write_bucket_table(std::ostream& out, const BucketTable& table);
BucketTable read_bucket_table(std::istream& in);

}  // namespace mbdlab::signals

#endif  // MBDLAB_SIGNALS_SIGNALS_H_
