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

#include "mbdlab/numerics/checkpoint.h"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace mbdlab::numerics {

namespace {

std::string hexfloat(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

double parse_hexfloat(const std::string& token) {
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (end == token.c_str() || *end != '\0') {
    throw std::runtime_error("checkpoint: bad number '" + token + "'");
  }
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& out, const ParamStore& params,
                      const std::map<std::string, std::string>& meta) {
  out << "mbdlab-params " << kCheckpointVersion << "\n";
  out << "seed " << params.seed() << "\n";
  for (const auto& [key, value] : meta) {
    if (key.find_first_of(" \t\n") != std::string::npos ||
        value.find('\n') != std::string::npos) {
      throw std::invalid_argument("checkpoint meta '" + key +
                                  "' must be a single-line, space-free key");
    }
    out << "meta " << key << " " << value << "\n";
  }
  for (const Param& p : params.params()) {
    out << "param " << p.name << " " << p.shape.rows << " " << p.shape.cols
        << "\n";
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      out << (i == 0 ? "" : " ") << hexfloat(p.value[i]);
    }
    out << "\n";
  }
  out << "end\n";
}

Checkpoint read_checkpoint(std::istream& in) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "mbdlab-params") {
    throw std::runtime_error("checkpoint: missing 'mbdlab-params' header");
  }
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(version));
  }
  Checkpoint ckpt;
  std::string tag;
  while (in >> tag) {
    if (tag == "end") return ckpt;
    if (tag == "seed") {
      std::uint64_t seed = 0;
      in >> seed;
      ckpt.params.set_seed(seed);
    } else if (tag == "meta") {
      std::string key, value;
      in >> key;
      std::getline(in, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      ckpt.meta[key] = value;
    } else if (tag == "param") {
      std::string name;
      Shape shape;
      if (!(in >> name >> shape.rows >> shape.cols)) {
        throw std::runtime_error("checkpoint: truncated param record");
      }
      std::vector<double> values(shape.size());
      std::string token;
      for (double& v : values) {
        if (!(in >> token)) {
          throw std::runtime_error("checkpoint: truncated values for '" + name + "'");
        }
        v = parse_hexfloat(token);
      }
      ckpt.params.add(name, shape, std::move(values));
    } else {
      throw std::runtime_error("checkpoint: unexpected record '" + tag + "'");
    }
  }
  throw std::runtime_error("checkpoint: missing 'end' record");
}

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const std::map<std::string, std::string>& meta) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  write_checkpoint(out, params, meta);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint '" + path + "'");
  return read_checkpoint(in);
}

}  // namespace mbdlab::numerics
