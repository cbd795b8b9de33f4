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

#ifndef MBDLAB_NUMERICS_PARAM_STORE_H_
#define MBDLAB_NUMERICS_PARAM_STORE_H_

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace mbdlab::numerics {

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
};

std::string to_string(Shape shape);

// A dense row-major parameter tensor and its gradient accumulator.
struct Param {
  std::string name;
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
};

// Owns every trainable tensor of one model. Parameters keep insertion order,
// which fixes the order of optimizer updates and checkpoint records.
class ParamStore {
 public:
  ParamStore() = default;
  explicit ParamStore(std::uint64_t seed) : seed_(seed) {}

  // Registers a parameter; `init` must have shape.size() entries. Names are
  // unique within a store.
  std::size_t add(std::string name, Shape shape, std::vector<double> init);

  std::size_t index_of(const std::string& name) const;
  bool contains(const std::string& name) const;

  Param& at(std::size_t index) { return params_.at(index); }
  const Param& at(std::size_t index) const { return params_.at(index); }
  Param& at(const std::string& name) { return params_.at(index_of(name)); }
  const Param& at(const std::string& name) const {
    return params_.at(index_of(name));
  }

  std::span<Param> params() { return params_; }
  std::span<const Param> params() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::size_t num_scalars() const;

  void zero_grad();
  bool grads_all_zero() const;

  std::uint64_t seed() const { return seed_; }
  void set_seed(std::uint64_t seed) { seed_ = seed; }

 private:
  std::uint64_t seed_ = 0;
  std::vector<Param> params_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace mbdlab::numerics

#endif  // MBDLAB_NUMERICS_PARAM_STORE_H_
