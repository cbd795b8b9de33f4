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

#ifndef MBDLAB_SYNTHENV_GENERATOR_H_
#define MBDLAB_SYNTHENV_GENERATOR_H_

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mbdlab/synthenv/dataset.h"

namespace mbdlab::synthenv {

enum class Region { kA, kB };
enum class Format { kPhoto, kVideo };

struct UserProfile {
  std::uint32_t id = 0;
  std::vector<double> taste;
  double patience = 0.0;        // ~ Normal(0, 0.5^2)
  double activity = 0.0;        // ~ Uniform(0, 1)
  Region region = Region::kA;
  double like_threshold = 0.0;  // ~ Normal(0, 1)
};

struct ItemProfile {
  std::uint32_t id = 0;
  std::vector<double> topic;
  double duration = 0.0;  // seconds; photos carry the display length
  double quality = 0.0;   // ~ Normal(0, 1)
  Format format = Format::kVideo;
  double views = 0.0;     // cumulative, integral, >= 0
};

// World model. Every field is written to and required from the JSON form.
struct GeneratorConfig {
  std::uint64_t num_users = 2000;
  std::uint64_t num_items = 20000;
  std::uint64_t num_interactions = 100000;
  std::uint64_t seed = 42;
  std::uint64_t latent_dim = 4;

  // completion = sigmoid(kappa * (a + completion_offset + patience) + eps),
  // eps ~ Normal(0, (watch_noise * cold_start_multiplier(views))^2)
  double affinity_sharpness = 3.0;
  double completion_offset = -0.5;
  double watch_noise = 0.5;
  double max_loops = 3.0;

  // P(loop) = sigmoid(loop_affinity * a - loop_duration * ln(d) + loop_offset)
  double loop_affinity = 2.0;
  double loop_duration = 0.6;
  double loop_offset = 0.0;

  // P(like) = sigmoid(like_gain * a + like_threshold + format + base)
  double like_gain = 2.0;
  double like_photo_offset = 0.5;
  double like_base_offset = -5.5;

  double photo_fraction = 0.15;
  double photo_display_seconds = 5.0;
  double min_duration = 2.0;
  double max_duration = 600.0;
  double max_log10_views = 6.0;

  // Label noise multiplier 1 + boost * exp(-ln(1 + views) / view_scale).
  double cold_start_noise_boost = 1.0;
  double cold_start_view_scale = 6.9;

  // Global watch-time multiplier per timestamp index; its length is the
  // number of indices.
  std::vector<double> drift = {1.0};

  void validate() const;
};

nlohmann::json to_json(const GeneratorConfig& config);
// Strict: every field must be present. Errors carry the field path.
GeneratorConfig generator_config_from_json(const nlohmann::json& j,
                                           const std::string& path = "generator");

struct Population {
  std::vector<UserProfile> users;
  std::vector<ItemProfile> items;
};

// Column layout shared by every synthetic dataset.
FeatureSchema synthetic_schema(std::size_t latent_dim);
std::vector<double> featurize(const UserProfile& user, const ItemProfile& item);

double affinity(const UserProfile& user, const ItemProfile& item);
double cold_start_multiplier(const GeneratorConfig& config, double views);
double drift_multiplier(const GeneratorConfig& config, std::uint32_t timestamp);

UserProfile sample_user(const GeneratorConfig& config, std::uint32_t id,
                        std::mt19937_64& rng);
ItemProfile sample_item(const GeneratorConfig& config, std::uint32_t id,
                        std::mt19937_64& rng);
Population make_population(const GeneratorConfig& config);

// Draws one interaction's labels under the pinned generative process.
Interaction simulate(const GeneratorConfig& config, const UserProfile& user,
                     const ItemProfile& item, std::uint32_t timestamp,
                     std::mt19937_64& rng);

// Deterministic under config.seed. Interactions are produced in shards of
// kShardSize, each from its own seed sub-stream, and concatenated in order.
inline constexpr std::size_t kShardSize = 4096;
Dataset generate(const GeneratorConfig& config);
Dataset generate(const GeneratorConfig& config, const Population& population);

// Scales watch time by schedule[timestamp] (capped at max_loops * duration).
// Throws std::out_of_range if a row's timestamp has no entry.
Dataset apply_drift(Dataset data, std::span<const double> schedule,
                    double max_loops = 3.0);

// ---------------------------------------------------------------------------
// Brute-force conditional oracles.

// Assignment of feature-column values (raw, un-normalized units).
using BiasContext = std::map<std::string, double>;

enum class OracleTarget { kWatchTime, kLogWatchTime, kLike, kLoop };
double oracle_value(const Interaction& row, OracleTarget target);

struct MomentEstimate {
  double mean = 0.0;
  double variance = 0.0;   // population variance of the draws
  double std_error = 0.0;  // of the mean
  std::size_t samples = 0;
};

// Draws `n` interactions whose fixed columns follow `context` and whose other
// latent variables come from the priors. Throws std::invalid_argument for a
// column name not in the synthetic schema.
std::vector<Interaction> sample_conditional(const GeneratorConfig& config,
                                            const BiasContext& context,
                                            std::size_t n, std::uint64_t seed,
                                            std::uint32_t timestamp = 0);

MomentEstimate oracle_conditional_stats(const GeneratorConfig& config,
                                        const BiasContext& context,
                                        OracleTarget target, std::size_t n_mc,
                                        std::uint64_t seed,
                                        std::uint32_t timestamp = 0);

MomentEstimate moments(std::span<const double> values);

}  // namespace mbdlab::synthenv

#endif  // MBDLAB_SYNTHENV_GENERATOR_H_
