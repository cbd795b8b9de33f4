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

#ifndef MBDLAB_NUMERICS_CHECKPOINT_H_
#define MBDLAB_NUMERICS_CHECKPOINT_H_

#include <iosfwd>
#include <map>
#include <string>

#include "mbdlab/numerics/param_store.h"

namespace mbdlab::numerics {

// Text container for a ParamStore:
//
//   mbdlab-params 1
//   seed <u64>
//   meta <key> <value to end of line>      (zero or more)
//   param <name> <rows> <cols>
//   <rows*cols hex-float values>
//   ...
//   end
//
// Values are written as C99 hex floats so a load reproduces every bit.
struct Checkpoint {
  ParamStore params;
  std::map<std::string, std::string> meta;
};

inline constexpr int kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const ParamStore& params,
                      const std::map<std::string, std::string>& meta = {});
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const std::map<std::string, std::string>& meta = {});
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mbdlab::numerics

#endif  // MBDLAB_NUMERICS_CHECKPOINT_H_
