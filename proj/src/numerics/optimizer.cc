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

#include "mbdlab/numerics/optimizer.h"

#include <cmath>
#include <stdexcept>

#include "mbdlab/errors.h"

namespace mbdlab::numerics {

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::kSgd ? "sgd" : "adam";
}

OptimizerKind optimizer_kind_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw std::invalid_argument("unknown optimizer '" + name + "'");
}

Optimizer::Optimizer(OptimizerConfig config, const ParamStore& store)
    : config_(config) {
  if (!(config_.learning_rate >= 0.0) || !std::isfinite(config_.learning_rate)) {
    throw std::invalid_argument("learning rate must be finite and >= 0");
  }
  for (const Param& p : store.params()) {
    m_.emplace_back(p.value.size(), 0.0);
    v_.emplace_back(p.value.size(), 0.0);
  }
}

void Optimizer::step(ParamStore& store) {
  if (store.size() != m_.size()) {
    throw ShapeError("optimizer was built for " + std::to_string(m_.size()) +
                     " parameters, store has " + std::to_string(store.size()));
  }
  for (const Param& p : store.params()) {
    for (std::size_t i = 0; i < p.grad.size(); ++i) {
      if (!std::isfinite(p.grad[i])) {
        throw NumericalError("non-finite gradient in '" + p.name + "' at index " +
                             std::to_string(i) + "; step rejected");
      }
    }
  }
  ++steps_;
  const double lr = config_.learning_rate;
  if (config_.kind == OptimizerKind::kSgd) {
    for (Param& p : store.params()) {
      for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] -= lr * p.grad[i];
    }
    return;
  }
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(b1, t);
  const double c2 = 1.0 - std::pow(b2, t);
  std::size_t k = 0;
  for (Param& p : store.params()) {
    std::vector<double>& m = m_[k];
    std::vector<double>& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p.value[i] -= lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
    ++k;
  }
}

}  // namespace mbdlab::numerics
