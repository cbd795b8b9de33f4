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

#ifndef MBDLAB_NUMERICS_OPTIMIZER_H_
#define MBDLAB_NUMERICS_OPTIMIZER_H_

#include <cstdint>
#include <string>
#include <vector>

#include "mbdlab/numerics/param_store.h"

namespace mbdlab::numerics {

enum class OptimizerKind { kSgd, kAdam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(const std::string& name);

// Applies updates to every parameter of one ParamStore. Gradients are read,
// never cleared; the caller resets them between steps.
class Optimizer {
 public:
  Optimizer(OptimizerConfig config, const ParamStore& store);

  // Throws NumericalError, leaving parameters untouched, if any gradient is
  // non-finite.
  void step(ParamStore& store);

  std::uint64_t steps() const { return steps_; }
  const OptimizerConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

 private:
  OptimizerConfig config_;
  std::uint64_t steps_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace mbdlab::numerics

#endif  // MBDLAB_NUMERICS_OPTIMIZER_H_
