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

#ifndef MBDLAB_SYNTHENV_DATASET_H_
#define MBDLAB_SYNTHENV_DATASET_H_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace mbdlab {

// Ordered feature columns plus optional z-score constants. One-hot columns
// are marked non-continuous and pass through normalization unchanged.
struct FeatureSchema {
  std::vector<std::string> names;
  std::vector<bool> continuous;
  std::vector<double> mean;   // empty until fit_normalization()
  std::vector<double> scale;  // empty until fit_normalization()

  std::size_t size() const { return names.size(); }
  std::optional<std::size_t> find(std::string_view name) const;
  // Throws std::invalid_argument naming the missing column.
  std::size_t index_of(std::string_view name) const;
  bool has_normalization() const { return mean.size() == names.size(); }

  // Throws ShapeError if x has the wrong width.
  void check_width(std::span<const double> x) const;
  std::vector<double> normalize(std::span<const double> x) const;
  void normalize_into(std::span<const double> x, std::span<double> out) const;

  bool operator==(const FeatureSchema&) const = default;
};

// One (user, item) event: observed features, engagement labels, time index.
struct Interaction {
  std::uint32_t user_id = 0;
  std::uint32_t item_id = 0;
  std::uint32_t timestamp = 0;
  std::vector<double> features;
  double watch_time = 0.0;  // seconds, >= 0
  int like = 0;
  int loop = 0;

  bool operator==(const Interaction&) const = default;
};

struct Dataset {
  FeatureSchema schema;
  std::vector<Interaction> rows;

  std::size_t size() const { return rows.size(); }
  bool empty() const { return rows.empty(); }
  // Feature column `name` for every row.
  std::vector<double> column(std::string_view name) const;
  // Rows satisfying the predicate, same schema.
  template <typename Pred>
  Dataset filter(Pred&& keep) const {
    Dataset out{schema, {}};
    for (const Interaction& r : rows) {
      if (keep(r)) out.rows.push_back(r);
    }
    return out;
  }
};

// Label names understood by label_value(): "watch_time", "like", "loop".
double label_value(const Interaction& row, std::string_view label);
bool is_known_label(std::string_view label);

// Fits z-score constants on `rows` (population std, floored at 1e-12 -> 1).
void fit_normalization(FeatureSchema& schema, const std::vector<Interaction>& rows);

// Delimiter-separated dataset file. Optional leading '#' comment lines carry
// provenance; the header row is
//   user_id,item_id,timestamp,<feature names...>,watch_time,like,loop
// Numbers are written with 17 significant digits so they round-trip.
void write_dataset_csv(std::ostream& out, const Dataset& data,
                       const std::vector<std::string>& comments = {});
Dataset read_dataset_csv(std::istream& in);
void save_dataset_csv(const std::string& path, const Dataset& data,
                      const std::vector<std::string>& comments = {});
Dataset load_dataset_csv(const std::string& path);

std::string format_double(double v);

// [{"name", "continuous", "mean"?, "scale"?}, ...]
nlohmann::json schema_to_json(const FeatureSchema& schema);
FeatureSchema schema_from_json(const nlohmann::json& columns);

}  // namespace mbdlab

#endif  // MBDLAB_SYNTHENV_DATASET_H_
