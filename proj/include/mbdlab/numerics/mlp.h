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

#ifndef MBDLAB_NUMERICS_MLP_H_
#define MBDLAB_NUMERICS_MLP_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mbdlab/numerics/param_store.h"
#include "mbdlab/numerics/tape.h"

namespace mbdlab::numerics {

enum class OutputActivation { kIdentity, kSigmoid };

// widths = {input, hidden..., output}; every hidden layer uses ReLU.
struct MlpSpec {
  std::vector<std::size_t> widths;
  OutputActivation output = OutputActivation::kIdentity;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t input_width() const { return widths.front(); }
  std::size_t output_width() const { return widths.back(); }
  std::size_t num_layers() const { return widths.size() - 1; }
};

// A stack of affine layers whose weights live in an external ParamStore
// under "<prefix>/w<i>" and "<prefix>/b<i>".
class Mlp {
 public:
  Mlp() = default;
  // Registers and initializes the layers: weights ~ N(0, 2 / fan_in) drawn
  // from spec.seed, biases zero.
  Mlp(MlpSpec spec, ParamStore& store, const std::string& prefix);
  // Binds to parameters already present in `store` (e.g. after loading a
  // checkpoint). Shapes are checked against the spec.
  static Mlp bind(MlpSpec spec, const ParamStore& store, const std::string& prefix);

  const MlpSpec& spec() const { return spec_; }

  // Records the forward pass; gradients flow into `store`.
  Var forward(Tape& tape, ParamStore& store, Var input) const;
  // Records the forward pass with the parameters held constant.
  Var forward_frozen(Tape& tape, const ParamStore& store, Var input) const;

  // Single-example inference without gradient bookkeeping.
  std::vector<double> apply(const ParamStore& store,
                            std::span<const double> input) const;

  std::span<const std::size_t> weight_indices() const { return weights_; }
  std::span<const std::size_t> bias_indices() const { return biases_; }

 private:
  template <typename ParamFn>
  Var run(Tape& tape, Var input, ParamFn&& param) const;

  MlpSpec spec_;
  std::vector<std::size_t> weights_;
  std::vector<std::size_t> biases_;
};

}  // namespace mbdlab::numerics

#endif  // MBDLAB_NUMERICS_MLP_H_
