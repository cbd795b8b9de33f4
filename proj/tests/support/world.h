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

// Shared fixtures for tests: a generated dataset split into train/held-out
// parts and a ranker trained on it, plus a few independent statistics.
#ifndef MBDLAB_TESTS_SUPPORT_WORLD_H_
#define MBDLAB_TESTS_SUPPORT_WORLD_H_

#include <algorithm>
#include <cmath>
#include <vector>

#include "mbdlab/ranker/ranker.h"
#include "mbdlab/synthenv/generator.h"

namespace mbdlab::testing {

struct World {
  synthenv::GeneratorConfig config;
  Dataset train;
  Dataset test;
  ranker::RankerModel model;
};

inline void split_holdout(const Dataset& all, Dataset& train, Dataset& test) {
  train = Dataset{all.schema, {}};
  test = Dataset{all.schema, {}};
  for (std::size_t i = 0; i < all.size(); ++i) {
    (i % 5 == 0 ? test : train).rows.push_back(all.rows[i]);
  }
  fit_normalization(train.schema, train.rows);
  test.schema = train.schema;
}

inline World make_world(std::size_t interactions, std::size_t epochs,
                        synthenv::GeneratorConfig config = {}) {
  World w;
  config.num_interactions = interactions;
  w.config = config;
  split_holdout(synthenv::generate(config), w.train, w.test);
  w.model = ranker::RankerModel(w.train.schema, ranker::default_tasks(), ranker::RankerConfig{});
  numerics::Optimizer opt({}, w.model.params());
  ranker::TrainOptions o;
  o.epochs = epochs;
  ranker::train(w.model, w.train, opt, o);
  return w;
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double pop_variance(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

inline double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const double ma = mean_of(a), mb = mean_of(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace mbdlab::testing

#endif  // MBDLAB_TESTS_SUPPORT_WORLD_H_
