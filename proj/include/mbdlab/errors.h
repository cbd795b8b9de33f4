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

#ifndef MBDLAB_ERRORS_H_
#define MBDLAB_ERRORS_H_

#include <stdexcept>
#include <string>

namespace mbdlab {

// Shape or schema disagreement between an input and what a model expects.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A value went non-finite (loss, gradient, prediction).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Statistics were requested from a bucket/cohort with no data.
class SparsityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration. `path` names the offending field, e.g.
// "mbd.branches[1].features[2]".
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string path, const std::string& message)
      : std::invalid_argument(path + ": " + message), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

}  // namespace mbdlab

#endif  // MBDLAB_ERRORS_H_
