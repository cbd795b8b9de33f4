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

#include "mbdlab/synthenv/dataset.h"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "mbdlab/errors.h"

namespace mbdlab {

namespace {

std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, delim)) out.push_back(cell);
  if (!line.empty() && line.back() == delim) out.emplace_back();
  return out;
}

double parse_number(const std::string& s, std::size_t line_no) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0') {
    throw std::runtime_error("dataset line " + std::to_string(line_no) +
                             ": bad number '" + s + "'");
  }
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::optional<std::size_t> FeatureSchema::find(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return i;
  }
  return std::nullopt;
}

std::size_t FeatureSchema::index_of(std::string_view name) const {
  if (auto i = find(name)) return *i;
  throw std::invalid_argument("unknown feature column '" + std::string(name) + "'");
}

void FeatureSchema::check_width(std::span<const double> x) const {
  if (x.size() != names.size()) {
    throw ShapeError("feature vector has " + std::to_string(x.size()) +
                     " entries, schema has " + std::to_string(names.size()));
  }
}

std::vector<double> FeatureSchema::normalize(std::span<const double> x) const {
  std::vector<double> out(x.size());
  normalize_into(x, out);
  return out;
}

void FeatureSchema::normalize_into(std::span<const double> x,
                                   std::span<double> out) const {
  check_width(x);
  if (!has_normalization()) {
    std::copy(x.begin(), x.end(), out.begin());
    return;
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = continuous[i] ? (x[i] - mean[i]) / scale[i] : x[i];
  }
}

std::vector<double> Dataset::column(std::string_view name) const {
  const std::size_t c = schema.index_of(name);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const Interaction& r : rows) out.push_back(r.features[c]);
  return out;
}

double label_value(const Interaction& row, std::string_view label) {
  if (label == "watch_time") return row.watch_time;
  if (label == "like") return row.like;
  if (label == "loop") return row.loop;
  throw std::invalid_argument("unknown label '" + std::string(label) + "'");
}

bool is_known_label(std::string_view label) {
  return label == "watch_time" || label == "like" || label == "loop";
}

void fit_normalization(FeatureSchema& schema, const std::vector<Interaction>& rows) {
  const std::size_t d = schema.size();
  schema.mean.assign(d, 0.0);
  schema.scale.assign(d, 1.0);
  if (rows.empty()) return;
  const double n = static_cast<double>(rows.size());
  for (std::size_t j = 0; j < d; ++j) {
    if (!schema.continuous[j]) continue;
    double m = 0.0;
    for (const Interaction& r : rows) m += r.features[j];
    m /= n;
    double v = 0.0;
    for (const Interaction& r : rows) v += (r.features[j] - m) * (r.features[j] - m);
    const double sd = std::sqrt(v / n);
    schema.mean[j] = m;
    schema.scale[j] = sd > 1e-12 ? sd : 1.0;
  }
}

void write_dataset_csv(std::ostream& out, const Dataset& data,
                       const std::vector<std::string>& comments) {
  for (const std::string& c : comments) out << "# " << c << "\n";
  out << "user_id,item_id,timestamp";
  for (std::size_t j = 0; j < data.schema.size(); ++j) {
    out << "," << data.schema.names[j] << (data.schema.continuous[j] ? "" : ":onehot");
  }
  out << ",watch_time,like,loop\n";
  for (const Interaction& r : data.rows) {
    out << r.user_id << "," << r.item_id << "," << r.timestamp;
    for (double v : r.features) out << "," << format_double(v);
    out << "," << format_double(r.watch_time) << "," << r.like << "," << r.loop
        << "\n";
  }
}

Dataset read_dataset_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.front() == '#') continue;
    break;
  }
  const std::vector<std::string> header = split(line, ',');
  if (header.size() < 6 || header[0] != "user_id" || header[1] != "item_id" ||
      header[2] != "timestamp" || header[header.size() - 3] != "watch_time" ||
      header[header.size() - 2] != "like" || header.back() != "loop") {
    throw std::runtime_error("dataset: unexpected header row '" + line + "'");
  }
  Dataset data;
  for (std::size_t j = 3; j + 3 < header.size(); ++j) {
    std::string name = header[j];
    bool continuous = true;
    if (auto pos = name.find(":onehot"); pos != std::string::npos) {
      name.erase(pos);
      continuous = false;
    }
    data.schema.names.push_back(name);
    data.schema.continuous.push_back(continuous);
  }
  const std::size_t d = data.schema.size();
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> cells = split(line, ',');
    if (cells.size() != header.size()) {
      throw std::runtime_error("dataset line " + std::to_string(line_no) + ": " +
                               std::to_string(cells.size()) + " cells, expected " +
                               std::to_string(header.size()));
    }
    Interaction r;
    r.user_id = static_cast<std::uint32_t>(parse_number(cells[0], line_no));
    r.item_id = static_cast<std::uint32_t>(parse_number(cells[1], line_no));
    r.timestamp = static_cast<std::uint32_t>(parse_number(cells[2], line_no));
    r.features.resize(d);
    for (std::size_t j = 0; j < d; ++j) r.features[j] = parse_number(cells[3 + j], line_no);
    r.watch_time = parse_number(cells[3 + d], line_no);
    r.like = static_cast<int>(parse_number(cells[4 + d], line_no));
    r.loop = static_cast<int>(parse_number(cells[5 + d], line_no));
    data.rows.push_back(std::move(r));
  }
  return data;
}

void save_dataset_csv(const std::string& path, const Dataset& data,
                      const std::vector<std::string>& comments) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset '" + path + "'");
  write_dataset_csv(out, data, comments);
}

Dataset load_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read dataset '" + path + "'");
  return read_dataset_csv(in);
}

nlohmann::json schema_to_json(const FeatureSchema& s) {
  nlohmann::json cols = nlohmann::json::array();
  for (std::size_t j = 0; j < s.size(); ++j) {
    nlohmann::json c{{"name", s.names[j]}, {"continuous", static_cast<bool>(s.continuous[j])}};
    if (s.has_normalization()) {
      c["mean"] = s.mean[j];
      c["scale"] = s.scale[j];
    }
    cols.push_back(c);
  }
  return cols;
}

FeatureSchema schema_from_json(const nlohmann::json& cols) {
  FeatureSchema s;
  bool norm = true;
  for (const nlohmann::json& c : cols) {
    s.names.push_back(c.at("name").get<std::string>());
    s.continuous.push_back(c.at("continuous").get<bool>());
    if (c.contains("mean")) {
      s.mean.push_back(c.at("mean").get<double>());
      s.scale.push_back(c.at("scale").get<double>());
    } else {
      norm = false;
    }
  }
  if (!norm) {
    s.mean.clear();
    s.scale.clear();
  }
  return s;
}

}  // namespace mbdlab
