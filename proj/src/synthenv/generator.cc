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

#include "mbdlab/synthenv/generator.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mbdlab/errors.h"

namespace mbdlab::synthenv {

namespace {

using nlohmann::json;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t substream(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream + 0x5851F42D4C957F2DULL));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

template <typename T>
T require(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError(path + "." + key, "missing required field");
  try {
    if constexpr (std::is_same_v<T, std::uint64_t>) {
      if (!it->is_number_unsigned() && !(it->is_number_integer() && it->get<long long>() >= 0)) {
        throw ConfigError(path + "." + key, "expected a non-negative integer");
      }
    } else if constexpr (std::is_same_v<T, double>) {
      if (!it->is_number()) throw ConfigError(path + "." + key, "expected a number");
    }
    return it->get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(path + "." + key, e.what());
  }
}

void check_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw ConfigError(std::string("generator.") + name, "must be finite and > 0");
  }
}

}  // namespace

void GeneratorConfig::validate() const {
  if (num_users == 0) throw ConfigError("generator.num_users", "must be > 0");
  if (num_items == 0) throw ConfigError("generator.num_items", "must be > 0");
  if (num_interactions == 0) {
    throw ConfigError("generator.num_interactions", "must be > 0");
  }
  if (latent_dim == 0) throw ConfigError("generator.latent_dim", "must be > 0");
  check_positive(affinity_sharpness, "affinity_sharpness");
  if (!(watch_noise >= 0.0)) throw ConfigError("generator.watch_noise", "must be >= 0");
  check_positive(max_loops, "max_loops");
  check_positive(photo_display_seconds, "photo_display_seconds");
  check_positive(min_duration, "min_duration");
  check_positive(max_duration, "max_duration");
  if (!(max_duration > min_duration)) {
    throw ConfigError("generator.max_duration", "must exceed min_duration");
  }
  check_positive(max_log10_views, "max_log10_views");
  check_positive(cold_start_view_scale, "cold_start_view_scale");
  if (!(cold_start_noise_boost >= 0.0)) {
    throw ConfigError("generator.cold_start_noise_boost", "must be >= 0");
  }
  if (!(photo_fraction >= 0.0 && photo_fraction <= 1.0)) {
    throw ConfigError("generator.photo_fraction", "must lie in [0, 1]");
  }
  if (drift.empty()) throw ConfigError("generator.drift", "needs at least one index");
  for (std::size_t i = 0; i < drift.size(); ++i) {
    if (!(drift[i] > 0.0) || !std::isfinite(drift[i])) {
      throw ConfigError("generator.drift[" + std::to_string(i) + "]",
                        "multipliers must be finite and > 0");
    }
  }
}

json to_json(const GeneratorConfig& c) {
  return json{{"num_users", c.num_users},
              {"num_items", c.num_items},
              {"num_interactions", c.num_interactions},
              {"seed", c.seed},
              {"latent_dim", c.latent_dim},
              {"affinity_sharpness", c.affinity_sharpness},
              {"completion_offset", c.completion_offset},
              {"watch_noise", c.watch_noise},
              {"max_loops", c.max_loops},
              {"loop_affinity", c.loop_affinity},
              {"loop_duration", c.loop_duration},
              {"loop_offset", c.loop_offset},
              {"like_gain", c.like_gain},
              {"like_photo_offset", c.like_photo_offset},
              {"like_base_offset", c.like_base_offset},
              {"photo_fraction", c.photo_fraction},
              {"photo_display_seconds", c.photo_display_seconds},
              {"min_duration", c.min_duration},
              {"max_duration", c.max_duration},
              {"max_log10_views", c.max_log10_views},
              {"cold_start_noise_boost", c.cold_start_noise_boost},
              {"cold_start_view_scale", c.cold_start_view_scale},
              {"drift", c.drift}};
}

GeneratorConfig generator_config_from_json(const json& j, const std::string& path) {
  GeneratorConfig c;
  c.num_users = require<std::uint64_t>(j, "num_users", path);
  c.num_items = require<std::uint64_t>(j, "num_items", path);
  c.num_interactions = require<std::uint64_t>(j, "num_interactions", path);
  c.seed = require<std::uint64_t>(j, "seed", path);
  c.latent_dim = require<std::uint64_t>(j, "latent_dim", path);
  c.affinity_sharpness = require<double>(j, "affinity_sharpness", path);
  c.completion_offset = require<double>(j, "completion_offset", path);
  c.watch_noise = require<double>(j, "watch_noise", path);
  c.max_loops = require<double>(j, "max_loops", path);
  c.loop_affinity = require<double>(j, "loop_affinity", path);
  c.loop_duration = require<double>(j, "loop_duration", path);
  c.loop_offset = require<double>(j, "loop_offset", path);
  c.like_gain = require<double>(j, "like_gain", path);
  c.like_photo_offset = require<double>(j, "like_photo_offset", path);
  c.like_base_offset = require<double>(j, "like_base_offset", path);
  c.photo_fraction = require<double>(j, "photo_fraction", path);
  c.photo_display_seconds = require<double>(j, "photo_display_seconds", path);
  c.min_duration = require<double>(j, "min_duration", path);
  c.max_duration = require<double>(j, "max_duration", path);
  c.max_log10_views = require<double>(j, "max_log10_views", path);
  c.cold_start_noise_boost = require<double>(j, "cold_start_noise_boost", path);
  c.cold_start_view_scale = require<double>(j, "cold_start_view_scale", path);
  c.drift = require<std::vector<double>>(j, "drift", path);
  try {
    c.validate();
  } catch (const ConfigError& e) {
    // Re-anchor "generator.x" paths onto the caller's path.
    std::string p = e.path();
    if (p.rfind("generator", 0) == 0) p = path + p.substr(9);
    throw ConfigError(p, std::string(e.what()).substr(e.path().size() + 2));
  }
  return c;
}

FeatureSchema synthetic_schema(std::size_t latent_dim) {
  FeatureSchema s;
  auto add = [&](std::string name, bool continuous) {
    s.names.push_back(std::move(name));
    s.continuous.push_back(continuous);
  };
  for (std::size_t j = 0; j < latent_dim; ++j) add("user_taste_" + std::to_string(j), true);
  add("user_patience", true);
  add("user_activity", true);
  add("user_region_a", false);
  add("user_region_b", false);
  add("user_like_threshold", true);
  for (std::size_t j = 0; j < latent_dim; ++j) add("item_topic_" + std::to_string(j), true);
  add("item_quality", true);
  add("item_duration", true);
  add("item_log_duration", true);
  add("item_format_photo", false);
  add("item_format_video", false);
  add("item_log_views", true);
  return s;
}

std::vector<double> featurize(const UserProfile& user, const ItemProfile& item) {
  std::vector<double> x;
  x.reserve(2 * user.taste.size() + 11);
  x.insert(x.end(), user.taste.begin(), user.taste.end());
  x.push_back(user.patience);
  x.push_back(user.activity);
  x.push_back(user.region == Region::kA ? 1.0 : 0.0);
  x.push_back(user.region == Region::kB ? 1.0 : 0.0);
  x.push_back(user.like_threshold);
  x.insert(x.end(), item.topic.begin(), item.topic.end());
  x.push_back(item.quality);
  x.push_back(item.duration);
  x.push_back(std::log(item.duration));
  x.push_back(item.format == Format::kPhoto ? 1.0 : 0.0);
  x.push_back(item.format == Format::kVideo ? 1.0 : 0.0);
  x.push_back(std::log1p(item.views));
  return x;
}

double affinity(const UserProfile& user, const ItemProfile& item) {
  double dot = 0.0;
  for (std::size_t j = 0; j < user.taste.size(); ++j) dot += user.taste[j] * item.topic[j];
  return sigmoid(item.quality + dot);
}

double cold_start_multiplier(const GeneratorConfig& config, double views) {
  return 1.0 + config.cold_start_noise_boost *
                   std::exp(-std::log1p(views) / config.cold_start_view_scale);
}

double drift_multiplier(const GeneratorConfig& config, std::uint32_t timestamp) {
  if (timestamp >= config.drift.size()) {
    throw std::out_of_range("no drift multiplier for timestamp " +
                            std::to_string(timestamp));
  }
  return config.drift[timestamp];
}

UserProfile sample_user(const GeneratorConfig& config, std::uint32_t id,
                        std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  UserProfile u;
  u.id = id;
  u.taste.resize(config.latent_dim);
  for (double& t : u.taste) t = normal(rng);
  u.patience = 0.5 * normal(rng);
  u.activity = uniform(rng);
  u.region = uniform(rng) < 0.5 ? Region::kA : Region::kB;
  u.like_threshold = normal(rng);
  return u;
}

ItemProfile sample_item(const GeneratorConfig& config, std::uint32_t id,
                        std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double topic_scale = 1.0 / std::sqrt(static_cast<double>(config.latent_dim));
  ItemProfile it;
  it.id = id;
  it.topic.resize(config.latent_dim);
  for (double& t : it.topic) t = topic_scale * normal(rng);
  it.quality = normal(rng);
  const bool photo = uniform(rng) < config.photo_fraction;
  const double log_d = std::log(config.min_duration) +
                       uniform(rng) * (std::log(config.max_duration) - std::log(config.min_duration));
  it.format = photo ? Format::kPhoto : Format::kVideo;
  it.duration = photo ? config.photo_display_seconds
                      : std::clamp(std::exp(log_d), config.min_duration, config.max_duration);
  it.views = std::floor(std::pow(10.0, uniform(rng) * config.max_log10_views) - 1.0);
  if (it.views < 0.0) it.views = 0.0;
  return it;
}

Population make_population(const GeneratorConfig& config) {
  config.validate();
  Population pop;
  std::mt19937_64 user_rng(substream(config.seed, 0xA11CE));
  std::mt19937_64 item_rng(substream(config.seed, 0xB0B));
  pop.users.reserve(config.num_users);
  for (std::uint64_t i = 0; i < config.num_users; ++i) {
    pop.users.push_back(sample_user(config, static_cast<std::uint32_t>(i), user_rng));
  }
  pop.items.reserve(config.num_items);
  for (std::uint64_t i = 0; i < config.num_items; ++i) {
    pop.items.push_back(sample_item(config, static_cast<std::uint32_t>(i), item_rng));
  }
  return pop;
}

Interaction simulate(const GeneratorConfig& config, const UserProfile& user,
                     const ItemProfile& item, std::uint32_t timestamp,
                     std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double a = affinity(user, item);
  const double noise =
      config.watch_noise * cold_start_multiplier(config, item.views) * normal(rng);
  const double completion = std::clamp(
      sigmoid(config.affinity_sharpness * (a + config.completion_offset + user.patience) +
              noise),
      0.0, 1.0);
  const double u_loop = uniform(rng);
  const double u_like = uniform(rng);

  Interaction r;
  r.user_id = user.id;
  r.item_id = item.id;
  r.timestamp = timestamp;
  r.features = featurize(user, item);
  r.watch_time = std::min(completion * item.duration * drift_multiplier(config, timestamp),
                          config.max_loops * item.duration);
  if (item.format == Format::kVideo) {
    const double p_loop = sigmoid(config.loop_affinity * a -
                                  config.loop_duration * std::log(item.duration) +
                                  config.loop_offset);
    r.loop = u_loop < p_loop ? 1 : 0;
  }
  const double like_logit =
      config.like_gain * a + user.like_threshold +
      (item.format == Format::kPhoto ? config.like_photo_offset : 0.0) +
      config.like_base_offset;
  r.like = u_like < sigmoid(like_logit) ? 1 : 0;
  return r;
}

Dataset generate(const GeneratorConfig& config) {
  return generate(config, make_population(config));
}

Dataset generate(const GeneratorConfig& config, const Population& pop) {
  config.validate();
  Dataset data{synthetic_schema(config.latent_dim), {}};
  const std::size_t n = config.num_interactions;
  const std::size_t num_indices = config.drift.size();
  std::vector<double> user_weight;
  user_weight.reserve(pop.users.size());
  for (const UserProfile& u : pop.users) user_weight.push_back(0.5 + u.activity);
  std::discrete_distribution<std::size_t> pick_user(user_weight.begin(), user_weight.end());
  std::uniform_int_distribution<std::size_t> pick_item(0, pop.items.size() - 1);
  data.rows.reserve(n);
  for (std::size_t shard = 0; shard * kShardSize < n; ++shard) {
    std::mt19937_64 rng(substream(config.seed, 1000 + shard));
    pick_user.reset();
    const std::size_t end = std::min(n, (shard + 1) * kShardSize);
    for (std::size_t i = shard * kShardSize; i < end; ++i) {
      const UserProfile& u = pop.users[pick_user(rng)];
      const ItemProfile& it = pop.items[pick_item(rng)];
      const auto t = static_cast<std::uint32_t>(i * num_indices / n);
      data.rows.push_back(simulate(config, u, it, t, rng));
    }
  }
  return data;
}

Dataset apply_drift(Dataset data, std::span<const double> schedule, double max_loops) {
  const std::size_t d_col = data.schema.index_of("item_duration");
  for (const Interaction& r : data.rows) {
    if (r.timestamp >= schedule.size()) {
      throw std::out_of_range("drift schedule has no entry for timestamp " +
                              std::to_string(r.timestamp));
    }
  }
  for (Interaction& r : data.rows) {
    const double m = schedule[r.timestamp];
    if (m == 1.0) continue;
    r.watch_time = std::min(r.watch_time * m, max_loops * r.features[d_col]);
  }
  return data;
}

double oracle_value(const Interaction& row, OracleTarget target) {
  switch (target) {
    case OracleTarget::kWatchTime:
      return row.watch_time;
    case OracleTarget::kLogWatchTime:
      return std::log1p(row.watch_time);
    case OracleTarget::kLike:
      return row.like;
    case OracleTarget::kLoop:
      return row.loop;
  }
  return 0.0;
}

MomentEstimate moments(std::span<const double> values) {
  MomentEstimate m;
  m.samples = values.size();
  if (values.empty()) return m;
  double sum = 0.0;
  for (double v : values) sum += v;
  m.mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - m.mean) * (v - m.mean);
  m.variance = ss / static_cast<double>(values.size());
  m.std_error = std::sqrt(m.variance / static_cast<double>(values.size()));
  return m;
}

namespace {

void apply_context(const GeneratorConfig& config, const BiasContext& context,
                   UserProfile& user, ItemProfile& item) {
  bool duration_fixed = false, format_fixed = false;
  for (const auto& [name, v] : context) {
    if (name.rfind("user_taste_", 0) == 0) {
      user.taste.at(std::stoul(name.substr(11))) = v;
    } else if (name == "user_patience") {
      user.patience = v;
    } else if (name == "user_activity") {
      user.activity = v;
    } else if (name == "user_region_a") {
      user.region = v > 0.5 ? Region::kA : Region::kB;
    } else if (name == "user_region_b") {
      user.region = v > 0.5 ? Region::kB : Region::kA;
    } else if (name == "user_like_threshold") {
      user.like_threshold = v;
    } else if (name.rfind("item_topic_", 0) == 0) {
      item.topic.at(std::stoul(name.substr(11))) = v;
    } else if (name == "item_quality") {
      item.quality = v;
    } else if (name == "item_duration") {
      item.duration = v;
      duration_fixed = true;
    } else if (name == "item_log_duration") {
      item.duration = std::exp(v);
      duration_fixed = true;
    } else if (name == "item_format_photo") {
      item.format = v > 0.5 ? Format::kPhoto : Format::kVideo;
      format_fixed = true;
    } else if (name == "item_format_video") {
      item.format = v > 0.5 ? Format::kVideo : Format::kPhoto;
      format_fixed = true;
    } else if (name == "item_log_views") {
      item.views = std::expm1(v);
    }
  }
  if (duration_fixed && !format_fixed) {
    item.format = item.duration == config.photo_display_seconds ? Format::kPhoto
                                                                : Format::kVideo;
  } else if (format_fixed && !duration_fixed) {
    if (item.format == Format::kPhoto) {
      item.duration = config.photo_display_seconds;
    } else if (item.duration == config.photo_display_seconds) {
      // Prior draw was a photo; redraw a video length deterministically from
      // the topic so the stream stays aligned.
      const double u = 0.5 + 0.5 * std::erf(item.topic[0] * std::sqrt(config.latent_dim / 2.0));
      item.duration = std::exp(std::log(config.min_duration) +
                               u * (std::log(config.max_duration) - std::log(config.min_duration)));
    }
  }
}

}  // namespace

std::vector<Interaction> sample_conditional(const GeneratorConfig& config,
                                            const BiasContext& context,
                                            std::size_t n, std::uint64_t seed,
                                            std::uint32_t timestamp) {
  config.validate();
  const FeatureSchema schema = synthetic_schema(config.latent_dim);
  for (const auto& [name, v] : context) {
    if (!schema.find(name)) {
      throw std::invalid_argument("bias context references unknown feature '" + name + "'");
    }
    if (!std::isfinite(v)) {
      throw std::invalid_argument("bias context value for '" + name + "' is not finite");
    }
  }
  std::mt19937_64 rng(substream(seed, 0x0C0FFEE));
  std::vector<Interaction> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    UserProfile u = sample_user(config, 0, rng);
    ItemProfile it = sample_item(config, 0, rng);
    apply_context(config, context, u, it);
    out.push_back(simulate(config, u, it, timestamp, rng));
  }
  return out;
}

MomentEstimate oracle_conditional_stats(const GeneratorConfig& config,
                                        const BiasContext& context,
                                        OracleTarget target, std::size_t n_mc,
                                        std::uint64_t seed, std::uint32_t timestamp) {
  if (n_mc == 0) throw std::invalid_argument("oracle needs n_mc >= 1");
  std::vector<double> values;
  values.reserve(n_mc);
  for (const Interaction& r : sample_conditional(config, context, n_mc, seed, timestamp)) {
    values.push_back(oracle_value(r, target));
  }
  return moments(values);
}

}  // namespace mbdlab::synthenv
