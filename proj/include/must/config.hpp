#pragma once

// INI-style run configuration with [scenario], [model], [train] and [paths]
// sections. Every key has a default; unknown sections or keys are rejected.

#include "must/common.hpp"
#include "must/graph.hpp"
#include "must/mobility.hpp"
#include "must/model.hpp"
#include "must/training.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

namespace must {

struct RunPaths {
  std::string dataset;
  std::string checkpoint;
  std::string report;
  std::string loss_log;

  friend bool operator==(const RunPaths&, const RunPaths&) = default;
};

/// model.num_nodes is not a key: it always follows the node count of the data in use.
struct RunConfig {
  ScenarioConfig scenario;
  ModelConfig model;
  TrainConfig train;
  RunPaths paths;

  /// Sets the scenario, model and training seeds together.
  void set_seed(std::uint64_t s) {
    scenario.rng_seed = s;
    model.seed = s;
    train.seed = s;
  }

  void validate() const {
    scenario.validate();
    model.validate();
    train.validate();
  }
};

namespace detail {

template <typename T>
T parse_number(const std::string& key, const std::string& s) {
  T v{};
  const char* b = s.data();
  const char* e = s.data() + s.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e) throw ConfigError("bad value '" + s + "' for key '" + key + "'");
  return v;
}

template <>
inline double parse_number<double>(const std::string& key, const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size() || !std::isfinite(v)) throw ConfigError("bad value '" + s + "' for key '" + key + "'");
  return v;
}

struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <typename T>
std::string show(const T& v) {
  if constexpr (std::is_floating_point_v<T>) return format_g(v, 17);
  else return std::to_string(v);
}

inline std::vector<Field> config_fields() {
  std::vector<Field> f;
  auto num = [&](const char* sec, const char* key, auto proj) {
    using T = std::remove_reference_t<decltype(proj(std::declval<RunConfig&>()))>;
    const std::string full = std::string(sec) + "." + key;
    f.push_back({sec, key, [proj](const RunConfig& c) { return show(proj(const_cast<RunConfig&>(c))); },
                 [proj, full](RunConfig& c, const std::string& s) { proj(c) = parse_number<T>(full, s); }});
  };
  auto str = [&](const char* sec, const char* key, auto proj) {
    f.push_back({sec, key, [proj](const RunConfig& c) { return proj(const_cast<RunConfig&>(c)); },
                 [proj](RunConfig& c, const std::string& s) { proj(c) = s; }});
  };
#define MUST_NUM(sec, key, expr) num(sec, key, [](RunConfig& c) -> auto& { return c.expr; })
  MUST_NUM("scenario", "num_uavs", scenario.num_uavs);
  MUST_NUM("scenario", "area_km2", scenario.area_km2);
  MUST_NUM("scenario", "speed_min", scenario.speed_min);
  MUST_NUM("scenario", "speed_max", scenario.speed_max);
  MUST_NUM("scenario", "comm_radius", scenario.comm_radius);
  MUST_NUM("scenario", "comm_radius_min", scenario.comm_radius_min);
  MUST_NUM("scenario", "comm_radius_max", scenario.comm_radius_max);
  MUST_NUM("scenario", "duration", scenario.duration);
  MUST_NUM("scenario", "sampling_interval", scenario.sampling_interval);
  MUST_NUM("scenario", "tick", scenario.tick);
  f.push_back({"scenario", "mobility_model",
               [](const RunConfig& c) { return std::string(to_string(c.scenario.mobility_model)); },
               [](RunConfig& c, const std::string& s) { c.scenario.mobility_model = parse_mobility_model(s); }});
  MUST_NUM("scenario", "snr_mean", scenario.snr_mean);
  MUST_NUM("scenario", "snr_std", scenario.snr_std);
  MUST_NUM("scenario", "warmup_steps", scenario.warmup_steps);
  MUST_NUM("scenario", "min_snapshots", scenario.min_snapshots);
  MUST_NUM("scenario", "seed", scenario.rng_seed);
  MUST_NUM("scenario", "epoch", scenario.epoch);
  MUST_NUM("scenario", "grid_spacing", scenario.grid_spacing);
  MUST_NUM("scenario", "p_straight", scenario.p_straight);
  MUST_NUM("scenario", "p_left", scenario.p_left);
  MUST_NUM("scenario", "p_right", scenario.p_right);
  MUST_NUM("scenario", "rpg_groups", scenario.rpg_groups);
  MUST_NUM("scenario", "rpg_member_radius", scenario.rpg_member_radius);
  MUST_NUM("scenario", "rpg_member_speed", scenario.rpg_member_speed);
  MUST_NUM("scenario", "gm_alpha", scenario.gm_alpha);
  MUST_NUM("scenario", "gm_mean_speed", scenario.gm_mean_speed);
  MUST_NUM("scenario", "gm_sigma_speed", scenario.gm_sigma_speed);
  MUST_NUM("scenario", "gm_sigma_heading", scenario.gm_sigma_heading);
  MUST_NUM("scenario", "gm_edge_margin", scenario.gm_edge_margin);

  MUST_NUM("model", "gat_hidden", model.gat_hidden);
  MUST_NUM("model", "gat_out", model.gat_out);
  MUST_NUM("model", "lstm_hidden", model.lstm_hidden);
  MUST_NUM("model", "lstm_layers", model.lstm_layers);
  MUST_NUM("model", "decoder_hidden", model.decoder_hidden);
  MUST_NUM("model", "leaky_slope", model.leaky_slope);
  f.push_back({"model", "variant", [](const RunConfig& c) { return std::string(to_string(c.model.variant)); },
               [](RunConfig& c, const std::string& s) { c.model.variant = parse_variant(s); }});
  MUST_NUM("model", "seed", model.seed);

  MUST_NUM("train", "epochs", train.epochs);
  MUST_NUM("train", "window", train.window);
  MUST_NUM("train", "train_samples", train.train_samples);
  MUST_NUM("train", "seed", train.seed);
  MUST_NUM("train", "learning_rate", train.adam.learning_rate);
  MUST_NUM("train", "adam_beta1", train.adam.beta1);
  MUST_NUM("train", "adam_beta2", train.adam.beta2);
  MUST_NUM("train", "adam_eps", train.adam.eps);
  MUST_NUM("train", "epsilon", train.loss.epsilon);
  MUST_NUM("train", "beta", train.loss.beta);
  MUST_NUM("train", "eta", train.loss.eta);
  MUST_NUM("train", "lambda", train.loss.lambda);
  MUST_NUM("train", "patience", train.patience);
  MUST_NUM("train", "min_improvement", train.min_improvement);
#undef MUST_NUM

  str("paths", "dataset", [](RunConfig& c) -> std::string& { return c.paths.dataset; });
  str("paths", "checkpoint", [](RunConfig& c) -> std::string& { return c.paths.checkpoint; });
  str("paths", "report", [](RunConfig& c) -> std::string& { return c.paths.report; });
  str("paths", "loss_log", [](RunConfig& c) -> std::string& { return c.paths.loss_log; });
  return f;
}

}  // namespace detail

/// Parses INI text on top of the defaults. Keys not set in the text keep their defaults.
inline RunConfig parse_config(std::istream& is, RunConfig base = {}) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }
  const auto fields = detail::config_fields();
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw ConfigError("config key '" + section + "' must be inside a [section]");
    bool known_section = false;
    for (const auto& f : fields) known_section = known_section || f.section == section;
    if (!known_section) throw ConfigError("unknown config section [" + section + "]");
    for (const auto& [key, val] : body) {
      const detail::Field* hit = nullptr;
      for (const auto& f : fields)
        if (f.section == section && f.key == key) hit = &f;
      if (!hit) throw ConfigError("unknown config key '" + section + "." + key + "'");
      hit->set(base, val.data());
    }
  }
  // seeds not given per section follow the scenario seed
  auto has = [&](const char* path) { return tree.get_child_optional(path).has_value(); };
  if (has("scenario.seed")) {
    if (!has("model.seed")) base.model.seed = base.scenario.rng_seed;
    if (!has("train.seed")) base.train.seed = base.scenario.rng_seed;
  }
  return base;
}

inline RunConfig parse_config_string(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config '" + path + "'");
  return parse_config(f);
}

/// Every effective key as `section.key = value`, in a fixed order.
inline std::vector<std::string> config_echo(const RunConfig& c) {
  std::vector<std::string> out;
  for (const auto& f : detail::config_fields()) out.push_back(f.section + "." + f.key + " = " + f.get(c));
  return out;
}

/// The effective configuration as INI text that parses back to the same values.
inline std::string config_to_ini(const RunConfig& c) {
  std::ostringstream os;
  std::string current;
  for (const auto& f : detail::config_fields()) {
    if (f.section != current) {
      os << (current.empty() ? "" : "\n") << '[' << f.section << "]\n";
      current = f.section;
    }
    os << f.key << " = " << f.get(c) << '\n';
  }
  return os.str();
}

}  // namespace must
