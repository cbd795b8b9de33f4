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

#include "mbdlab/numerics/param_store.h"

#include <algorithm>
#include <stdexcept>

#include "mbdlab/errors.h"

namespace mbdlab::numerics {

std::string to_string(Shape shape) {
  return "[" + std::to_string(shape.rows) + "x" + std::to_string(shape.cols) +
         "]";
}

std::size_t ParamStore::add(std::string name, Shape shape,
                            std::vector<double> init) {
  if (index_.contains(name)) {
    throw std::invalid_argument("duplicate parameter name '" + name + "'");
  }
  if (init.size() != shape.size()) {
    throw ShapeError("parameter '" + name + "' of shape " + to_string(shape) +
                     " given " + std::to_string(init.size()) + " values");
  }
  const std::size_t index = params_.size();
  index_.emplace(name, index);
  params_.push_back(Param{std::move(name), shape, std::move(init),
                          std::vector<double>(shape.size(), 0.0)});
  return index;
}

std::size_t ParamStore::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw std::out_of_range("no parameter named '" + name + "'");
  }
  return it->second;
}

bool ParamStore::contains(const std::string& name) const {
  return index_.contains(name);
}

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const Param& p : params_) n += p.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (Param& p : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

bool ParamStore::grads_all_zero() const {
  for (const Param& p : params_) {
    for (double g : p.grad) {
      if (g != 0.0) return false;
    }
  }
  return true;
}

}  // namespace mbdlab::numerics
