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

#include "mbdlab/numerics/mlp.h"

#include <cmath>
#include <random>
#include <stdexcept>

#include "mbdlab/errors.h"

namespace mbdlab::numerics {

void MlpSpec::validate() const {
  if (widths.size() < 2) {
    throw std::invalid_argument("MlpSpec needs at least one layer (two widths)");
  }
  for (std::size_t w : widths) {
    if (w == 0) throw std::invalid_argument("MlpSpec widths must be >= 1");
  }
}

Mlp::Mlp(MlpSpec spec, ParamStore& store, const std::string& prefix)
    : spec_(std::move(spec)) {
  spec_.validate();
  std::mt19937_64 rng(spec_.seed);
  for (std::size_t l = 0; l < spec_.num_layers(); ++l) {
    const std::size_t fan_in = spec_.widths[l];
    const std::size_t fan_out = spec_.widths[l + 1];
    std::normal_distribution<double> normal(
        0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    std::vector<double> w(fan_in * fan_out);
    for (double& v : w) v = normal(rng);
    weights_.push_back(store.add(prefix + "/w" + std::to_string(l),
                                 {fan_in, fan_out}, std::move(w)));
    biases_.push_back(store.add(prefix + "/b" + std::to_string(l), {1, fan_out},
                                std::vector<double>(fan_out, 0.0)));
  }
}

Mlp Mlp::bind(MlpSpec spec, const ParamStore& store, const std::string& prefix) {
  spec.validate();
  Mlp mlp;
  mlp.spec_ = std::move(spec);
  for (std::size_t l = 0; l < mlp.spec_.num_layers(); ++l) {
    const Shape ws{mlp.spec_.widths[l], mlp.spec_.widths[l + 1]};
    const Shape bs{1, mlp.spec_.widths[l + 1]};
    const std::size_t wi = store.index_of(prefix + "/w" + std::to_string(l));
    const std::size_t bi = store.index_of(prefix + "/b" + std::to_string(l));
    if (store.at(wi).shape != ws || store.at(bi).shape != bs) {
      throw ShapeError("layer " + std::to_string(l) + " of '" + prefix +
                       "' has shape " + to_string(store.at(wi).shape) +
                       ", spec expects " + to_string(ws));
    }
    mlp.weights_.push_back(wi);
    mlp.biases_.push_back(bi);
  }
  return mlp;
}

template <typename ParamFn>
Var Mlp::run(Tape& tape, Var input, ParamFn&& param) const {
  const Shape in = tape.shape(input);
  if (in.cols != spec_.input_width()) {
    throw ShapeError("MLP expects input width " +
                     std::to_string(spec_.input_width()) + ", got " +
                     std::to_string(in.cols) + " (input shape " +
                     to_string(in) + ")");
  }
  Var h = input;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    h = tape.add_row(tape.matmul(h, param(weights_[l])), param(biases_[l]));
    if (l + 1 < weights_.size()) {
      h = tape.relu(h);
    } else if (spec_.output == OutputActivation::kSigmoid) {
      h = tape.sigmoid(h);
    }
  }
  return h;
}

Var Mlp::forward(Tape& tape, ParamStore& store, Var input) const {
  return run(tape, input,
             [&](std::size_t index) { return tape.param(store, index); });
}

Var Mlp::forward_frozen(Tape& tape, const ParamStore& store, Var input) const {
  return run(tape, input,
             [&](std::size_t index) { return tape.frozen_param(store, index); });
}

std::vector<double> Mlp::apply(const ParamStore& store,
                               std::span<const double> input) const {
  Tape tape;
  Var x = tape.constant({1, input.size()},
                        std::vector<double>(input.begin(), input.end()));
  Var y = forward_frozen(tape, store, x);
  auto v = tape.value(y);
  return {v.begin(), v.end()};
}

}  // namespace mbdlab::numerics
