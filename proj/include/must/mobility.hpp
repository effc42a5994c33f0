#pragma once

// UAV swarm simulator: four mobility models, the radio link-weight model and
// sampling of the weighted snapshot sequence.

#include "must/common.hpp"
#include "must/graph.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace must {

using Rng = std::mt19937_64;

enum class MobilityModel { RandomWalk, ManhattanGrid, ReferencePointGroup, GaussMarkov };

inline constexpr std::array<std::string_view, 4> kMobilityNames = {"RW", "MG", "RPG", "GM"};

inline std::string_view to_string(MobilityModel m) { return kMobilityNames[static_cast<std::size_t>(m)]; }

inline MobilityModel parse_mobility_model(std::string_view s) {
  for (std::size_t i = 0; i < kMobilityNames.size(); ++i)
    if (s == kMobilityNames[i]) return static_cast<MobilityModel>(i);
  throw ConfigError("unknown mobility model '" + std::string(s) + "' (valid: RW, MG, RPG, GM)");
}

struct ScenarioConfig {
  int num_uavs = 100;
  double area_km2 = 100.0;
  double speed_min = 25.0;  // m/s
  double speed_max = 35.0;
  /// Fixed radius in meters; when <= 0 one radius is drawn from [radius_min, radius_max] per scenario.
  double comm_radius = 0.0;
  double comm_radius_min = 1000.0;
  double comm_radius_max = 2000.0;
  double duration = 800.0;          // s
  double sampling_interval = 10.0;  // s
  double tick = 1.0;                // s
  MobilityModel mobility_model = MobilityModel::RandomWalk;
  double snr_mean = 15.0;
  double snr_std = 5.0;
  int warmup_steps = 20;
  int min_snapshots = 1;
  std::uint64_t rng_seed = 1;

  // RW and MG: speed/heading redraw period.
  double epoch = 10.0;
  // MG
  double grid_spacing = 1000.0;
  double p_straight = 0.5;
  double p_left = 0.25;
  double p_right = 0.25;
  // RPG
  int rpg_groups = 4;
  double rpg_member_radius = 4000.0;
  double rpg_member_speed = 5.0;
  // GM; a negative mean speed selects the midpoint of the speed range.
  double gm_alpha = 0.75;
  double gm_mean_speed = -1.0;
  double gm_sigma_speed = 2.5;
  double gm_sigma_heading = 0.3;
  double gm_edge_margin = 500.0;

  double area_side() const { return std::sqrt(area_km2) * 1000.0; }
  double mean_speed() const { return gm_mean_speed >= 0.0 ? gm_mean_speed : 0.5 * (speed_min + speed_max); }
  int snapshot_count() const { return static_cast<int>(std::llround(duration / sampling_interval)); }
  int ticks_per_sample() const { return static_cast<int>(std::llround(sampling_interval / tick)); }
  int ticks_per_epoch() const { return std::max(1, static_cast<int>(std::llround(epoch / tick))); }
  int grid_cells() const { return static_cast<int>(std::llround(area_side() / grid_spacing)); }

  void validate() const {
    auto require = [](bool ok, const std::string& msg) {
      if (!ok) throw ConfigError(msg);
    };
    auto divides = [](double whole, double part) {
      double q = whole / part;
      return std::abs(q - std::round(q)) < 1e-9 * std::max(1.0, q) && std::round(q) >= 1.0;
    };
    require(num_uavs >= 1, "num_uavs must be >= 1");
    require(area_km2 > 0.0, "area_km2 must be > 0");
    require(speed_min >= 0.0 && speed_min <= speed_max, "speed range must satisfy 0 <= speed_min <= speed_max");
    if (comm_radius <= 0.0)
      require(comm_radius_min > 0.0 && comm_radius_min <= comm_radius_max,
              "comm radius range must satisfy 0 < comm_radius_min <= comm_radius_max");
    require(snr_std >= 0.0, "snr_std must be >= 0");
    require(tick > 0.0 && sampling_interval > 0.0 && duration > 0.0, "tick, sampling_interval and duration must be > 0");
    require(divides(duration, sampling_interval), "sampling_interval must divide duration");
    require(divides(sampling_interval, tick), "tick must divide sampling_interval");
    require(warmup_steps >= 0, "warmup_steps must be >= 0");
    require(snapshot_count() >= min_snapshots,
            "duration / sampling_interval = " + std::to_string(snapshot_count()) + " is below the required " +
                std::to_string(min_snapshots) + " snapshots");
    require(epoch > 0.0, "epoch must be > 0");
    switch (mobility_model) {
      case MobilityModel::ManhattanGrid:
        require(grid_spacing > 0.0 && divides(area_side(), grid_spacing), "grid_spacing must tile the area side");
        require(p_straight >= 0.0 && p_left >= 0.0 && p_right >= 0.0 && p_straight + p_left + p_right > 0.0,
                "turn probabilities must be >= 0 with a positive sum");
        break;
      case MobilityModel::ReferencePointGroup:
        require(rpg_groups >= 1 && rpg_groups <= num_uavs, "rpg_groups must be in [1, num_uavs]");
        require(rpg_member_radius >= 0.0 && rpg_member_speed >= 0.0, "rpg member radius/speed must be >= 0");
        break;
      case MobilityModel::GaussMarkov:
        require(gm_alpha >= 0.0 && gm_alpha <= 1.0, "gm_alpha must be in [0, 1]");
        require(gm_sigma_speed >= 0.0 && gm_sigma_heading >= 0.0, "gm sigmas must be >= 0");
        require(gm_edge_margin >= 0.0, "gm_edge_margin must be >= 0");
        break;
      case MobilityModel::RandomWalk:
        break;
    }
  }
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(const Vec2&, const Vec2&) = default;
  double norm() const { return std::hypot(x, y); }
};

inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

/// Manhattan grid cursor: last intersection passed, travel direction (0 = +x, 1 = +y, 2 = -x, 3 = -y)
/// and distance covered since that intersection.
struct GridCursor {
  int ix = 0;
  int iy = 0;
  int dir = 0;
  double progress = 0.0;
  friend bool operator==(const GridCursor&, const GridCursor&) = default;
};

struct UavState {
  Vec2 position;
  double speed = 0.0;
  double heading = 0.0;  // radians in [0, 2 pi)
  // Model-specific state.
  GridCursor grid;           // MG
  int group = 0;             // RPG
  Vec2 offset;               // RPG: current offset from the reference point
  Vec2 offset_target;        // RPG
  double mean_heading = 0.0;  // GM

  friend bool operator==(const UavState&, const UavState&) = default;
};

struct ReferencePoint {
  Vec2 position;
  Vec2 waypoint;
  double speed = 0.0;
  friend bool operator==(const ReferencePoint&, const ReferencePoint&) = default;
};

struct SwarmState {
  std::vector<UavState> uavs;
  std::vector<ReferencePoint> groups;  // RPG only
  long tick = 0;
  friend bool operator==(const SwarmState&, const SwarmState&) = default;
};

// ---------------------------------------------------------------------------
// Radio link weight
// ---------------------------------------------------------------------------

/// ((r - d) / r) * log2(1 + snr) inside the radius, 0 outside.
inline double link_weight(double d, double r, double snr) {
  if (d > r) return 0.0;
  return (r - d) / r * std::log2(1.0 + snr);
}

// ---------------------------------------------------------------------------
// helpers
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline double uniform(Rng& rng, double a, double b) {
  if (a == b) return a;
  return std::uniform_real_distribution<double>(a, b)(rng);
}

inline double normal(Rng& rng, double mean, double sd) {
  if (sd == 0.0) return mean;
  return std::normal_distribution<double>(mean, sd)(rng);
}

inline double wrap_angle(double a) {
  a = std::fmod(a, kTwoPi);
  if (a < 0.0) a += kTwoPi;
  if (a >= kTwoPi) a = 0.0;
  return a;
}

/// Specular reflection off the walls of [0, side]^2; mirrors the heading on every bounce.
inline void reflect(Vec2& p, double& heading, double side) {
  for (int guard = 0; guard < 64; ++guard) {
    bool bounced = false;
    if (p.x < 0.0) {
      p.x = -p.x;
      heading = std::numbers::pi - heading;
      bounced = true;
    } else if (p.x > side) {
      p.x = 2.0 * side - p.x;
      heading = std::numbers::pi - heading;
      bounced = true;
    }
    if (p.y < 0.0) {
      p.y = -p.y;
      heading = -heading;
      bounced = true;
    } else if (p.y > side) {
      p.y = 2.0 * side - p.y;
      heading = -heading;
      bounced = true;
    }
    if (!bounced) break;
  }
  p.x = std::clamp(p.x, 0.0, side);
  p.y = std::clamp(p.y, 0.0, side);
  heading = wrap_angle(heading);
}

inline constexpr std::array<int, 4> kDx = {1, 0, -1, 0};
inline constexpr std::array<int, 4> kDy = {0, 1, 0, -1};

inline Vec2 grid_position(const GridCursor& c, double spacing) {
  return {c.ix * spacing + kDx[static_cast<std::size_t>(c.dir)] * c.progress,
          c.iy * spacing + kDy[static_cast<std::size_t>(c.dir)] * c.progress};
}

inline bool grid_feasible(int ix, int iy, int dir, int cells) {
  int nx = ix + kDx[static_cast<std::size_t>(dir)];
  int ny = iy + kDy[static_cast<std::size_t>(dir)];
  return nx >= 0 && ny >= 0 && nx <= cells && ny <= cells;
}

}  // namespace detail

/// Outgoing-direction probabilities at intersection (ix, iy) when arriving with direction `dir`.
/// Straight/left/right weights are renormalized over the moves that stay inside the grid; a dead end
/// forces a U-turn.
inline std::array<double, 4> manhattan_turn_probabilities(int ix, int iy, int dir, const ScenarioConfig& cfg) {
  const int cells = cfg.grid_cells();
  const std::array<int, 3> dirs = {dir, (dir + 1) % 4, (dir + 3) % 4};
  const std::array<double, 3> base = {cfg.p_straight, cfg.p_left, cfg.p_right};
  std::array<double, 4> p{};
  double total = 0.0;
  int feasible = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    if (!detail::grid_feasible(ix, iy, dirs[k], cells)) continue;
    ++feasible;
    p[static_cast<std::size_t>(dirs[k])] = base[k];
    total += base[k];
  }
  if (feasible == 0) {
    p[static_cast<std::size_t>((dir + 2) % 4)] = 1.0;
    return p;
  }
  if (total <= 0.0) {
    for (std::size_t k = 0; k < 3; ++k)
      if (detail::grid_feasible(ix, iy, dirs[k], cells)) p[static_cast<std::size_t>(dirs[k])] = 1.0 / feasible;
    return p;
  }
  for (double& v : p) v /= total;
  return p;
}

// ---------------------------------------------------------------------------
// initialization
// ---------------------------------------------------------------------------

inline SwarmState initial_swarm(const ScenarioConfig& cfg, Rng& rng) {
  using detail::uniform;
  const double side = cfg.area_side();
  SwarmState s;
  s.uavs.resize(static_cast<std::size_t>(cfg.num_uavs));
  switch (cfg.mobility_model) {
    case MobilityModel::RandomWalk:
      for (auto& u : s.uavs) {
        u.position = {uniform(rng, 0.0, side), uniform(rng, 0.0, side)};
        u.speed = uniform(rng, cfg.speed_min, cfg.speed_max);
        u.heading = detail::wrap_angle(uniform(rng, 0.0, detail::kTwoPi));
      }
      break;
    case MobilityModel::ManhattanGrid: {
      const int cells = cfg.grid_cells();
      for (auto& u : s.uavs) {
        auto& g = u.grid;
        g.ix = std::uniform_int_distribution<int>(0, cells)(rng);
        g.iy = std::uniform_int_distribution<int>(0, cells)(rng);
        std::vector<int> options;
        for (int d = 0; d < 4; ++d)
          if (detail::grid_feasible(g.ix, g.iy, d, cells)) options.push_back(d);
        g.dir = options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)];
        g.progress = uniform(rng, 0.0, cfg.grid_spacing);
        if (g.progress >= cfg.grid_spacing) g.progress = 0.0;
        u.position = detail::grid_position(g, cfg.grid_spacing);
        u.speed = uniform(rng, cfg.speed_min, cfg.speed_max);
        u.heading = g.dir * std::numbers::pi / 2.0;
      }
      break;
    }
    case MobilityModel::ReferencePointGroup: {
      s.groups.resize(static_cast<std::size_t>(cfg.rpg_groups));
      for (auto& g : s.groups) {
        g.position = {uniform(rng, 0.0, side), uniform(rng, 0.0, side)};
        g.waypoint = {uniform(rng, 0.0, side), uniform(rng, 0.0, side)};
        g.speed = uniform(rng, cfg.speed_min, cfg.speed_max);
      }
      auto disk = [&] {
        double rad = cfg.rpg_member_radius * std::sqrt(uniform(rng, 0.0, 1.0));
        double ang = uniform(rng, 0.0, detail::kTwoPi);
        return Vec2{rad * std::cos(ang), rad * std::sin(ang)};
      };
      for (std::size_t k = 0; k < s.uavs.size(); ++k) {
        auto& u = s.uavs[k];
        u.group = static_cast<int>(k % static_cast<std::size_t>(cfg.rpg_groups));
        u.offset = disk();
        u.offset_target = disk();
        const auto& g = s.groups[static_cast<std::size_t>(u.group)];
        u.position = g.position + u.offset;
        u.position.x = std::clamp(u.position.x, 0.0, side);
        u.position.y = std::clamp(u.position.y, 0.0, side);
        u.speed = g.speed;
      }
      break;
    }
    case MobilityModel::GaussMarkov:
      for (auto& u : s.uavs) {
        u.position = {uniform(rng, 0.0, side), uniform(rng, 0.0, side)};
        u.speed = uniform(rng, cfg.speed_min, cfg.speed_max);
        u.heading = detail::wrap_angle(uniform(rng, 0.0, detail::kTwoPi));
        u.mean_heading = detail::wrap_angle(uniform(rng, 0.0, detail::kTwoPi));
      }
      break;
  }
  return s;
}

/// Group sizes produced by round-robin assignment of num_uavs to rpg_groups groups.
inline std::vector<int> rpg_group_sizes(const ScenarioConfig& cfg) {
  std::vector<int> sizes(static_cast<std::size_t>(cfg.rpg_groups), 0);
  for (int k = 0; k < cfg.num_uavs; ++k) ++sizes[static_cast<std::size_t>(k % cfg.rpg_groups)];
  return sizes;
}

// ---------------------------------------------------------------------------
// one-tick updates
// ---------------------------------------------------------------------------

inline void step_random_walk(SwarmState& s, const ScenarioConfig& cfg, Rng& rng) {
  const double side = cfg.area_side();
  const bool redraw = s.tick % cfg.ticks_per_epoch() == 0;
  for (auto& u : s.uavs) {
    if (redraw) {
      u.heading = detail::wrap_angle(detail::uniform(rng, 0.0, detail::kTwoPi));
      u.speed = detail::uniform(rng, cfg.speed_min, cfg.speed_max);
    }
    u.position = u.position + (u.speed * cfg.tick) * Vec2{std::cos(u.heading), std::sin(u.heading)};
    detail::reflect(u.position, u.heading, side);
  }
  ++s.tick;
}

inline void step_manhattan_grid(SwarmState& s, const ScenarioConfig& cfg, Rng& rng) {
  const double spacing = cfg.grid_spacing;
  const bool redraw = s.tick % cfg.ticks_per_epoch() == 0;
  for (auto& u : s.uavs) {
    if (redraw) u.speed = detail::uniform(rng, cfg.speed_min, cfg.speed_max);
    auto& g = u.grid;
    g.progress += u.speed * cfg.tick;
    while (g.progress >= spacing) {
      g.progress -= spacing;
      g.ix += detail::kDx[static_cast<std::size_t>(g.dir)];
      g.iy += detail::kDy[static_cast<std::size_t>(g.dir)];
      const auto p = manhattan_turn_probabilities(g.ix, g.iy, g.dir, cfg);
      double pick = detail::uniform(rng, 0.0, 1.0);
      int chosen = -1;
      for (int d = 0; d < 4; ++d) {
        if (p[static_cast<std::size_t>(d)] <= 0.0) continue;
        chosen = d;
        pick -= p[static_cast<std::size_t>(d)];
        if (pick < 0.0) break;
      }
      g.dir = chosen;
    }
    u.position = detail::grid_position(g, spacing);
    u.heading = g.dir * std::numbers::pi / 2.0;
  }
  ++s.tick;
}

inline void step_reference_point_group(SwarmState& s, const ScenarioConfig& cfg, Rng& rng) {
  using detail::uniform;
  const double side = cfg.area_side();
  for (auto& g : s.groups) {
    const Vec2 to = g.waypoint - g.position;
    const double dist = to.norm();
    const double stride = g.speed * cfg.tick;
    if (dist <= stride) {
      g.position = g.waypoint;
      g.waypoint = {uniform(rng, 0.0, side), uniform(rng, 0.0, side)};
      g.speed = uniform(rng, cfg.speed_min, cfg.speed_max);
    } else {
      g.position = g.position + (stride / dist) * to;
    }
  }
  for (auto& u : s.uavs) {
    const auto& g = s.groups[static_cast<std::size_t>(u.group)];
    if (cfg.rpg_member_radius > 0.0) {
      const Vec2 to = u.offset_target - u.offset;
      const double dist = to.norm();
      const double stride = cfg.rpg_member_speed * cfg.tick;
      if (dist <= stride) {
        u.offset = u.offset_target;
        double rad = cfg.rpg_member_radius * std::sqrt(uniform(rng, 0.0, 1.0));
        double ang = uniform(rng, 0.0, detail::kTwoPi);
        u.offset_target = {rad * std::cos(ang), rad * std::sin(ang)};
      } else {
        u.offset = u.offset + (stride / dist) * to;
      }
    } else {
      u.offset = u.offset_target = {};
    }
    const Vec2 prev = u.position;
    u.position = g.position + u.offset;
    u.position.x = std::clamp(u.position.x, 0.0, side);
    u.position.y = std::clamp(u.position.y, 0.0, side);
    u.speed = g.speed;
    const Vec2 mv = u.position - prev;
    if (mv.norm() > 0.0) u.heading = detail::wrap_angle(std::atan2(mv.y, mv.x));
  }
  ++s.tick;
}

inline void step_gauss_markov(SwarmState& s, const ScenarioConfig& cfg, Rng& rng) {
  const double side = cfg.area_side();
  const double a = cfg.gm_alpha;
  const double noise = std::sqrt(std::max(0.0, 1.0 - a * a));
  const double margin = cfg.gm_edge_margin;
  for (auto& u : s.uavs) {
    u.position = u.position + (u.speed * cfg.tick) * Vec2{std::cos(u.heading), std::sin(u.heading)};
    detail::reflect(u.position, u.heading, side);

    // Near a wall the mean heading points back into the area.
    double target = u.mean_heading;
    int vx = 0, vy = 0;
    if (u.position.x < margin) vx = 1;
    else if (u.position.x > side - margin) vx = -1;
    if (u.position.y < margin) vy = 1;
    else if (u.position.y > side - margin) vy = -1;
    if (vx != 0 || vy != 0) target = detail::wrap_angle(std::atan2(static_cast<double>(vy), static_cast<double>(vx)));

    double speed = a * u.speed + (1.0 - a) * cfg.mean_speed();
    if (noise > 0.0) speed += noise * detail::normal(rng, 0.0, cfg.gm_sigma_speed);
    u.speed = std::clamp(speed, cfg.speed_min, cfg.speed_max);

    // Blend toward the representative of the target angle closest to the current heading.
    double delta = std::remainder(target - u.heading, detail::kTwoPi);
    double heading = u.heading + (1.0 - a) * delta;
    if (noise > 0.0) heading += noise * detail::normal(rng, 0.0, cfg.gm_sigma_heading);
    u.heading = detail::wrap_angle(heading);
  }
  ++s.tick;
}

inline void step(SwarmState& s, const ScenarioConfig& cfg, Rng& rng) {
  switch (cfg.mobility_model) {
    case MobilityModel::RandomWalk: return step_random_walk(s, cfg, rng);
    case MobilityModel::ManhattanGrid: return step_manhattan_grid(s, cfg, rng);
    case MobilityModel::ReferencePointGroup: return step_reference_point_group(s, cfg, rng);
    case MobilityModel::GaussMarkov: return step_gauss_markov(s, cfg, rng);
  }
}

// ---------------------------------------------------------------------------
// snapshots
// ---------------------------------------------------------------------------

/// Draws one SNR per in-range pair (normal, clamped at 0) and fills the symmetric weight matrix.
inline WeightedSnapshot sample_snapshot(const SwarmState& s, double comm_radius, const ScenarioConfig& cfg, Rng& rng) {
  const int n = static_cast<int>(s.uavs.size());
  Matrix w = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double d = distance(s.uavs[static_cast<std::size_t>(i)].position, s.uavs[static_cast<std::size_t>(j)].position);
      if (d > comm_radius) continue;
      const double snr = std::max(0.0, detail::normal(rng, cfg.snr_mean, cfg.snr_std));
      w(i, j) = w(j, i) = link_weight(d, comm_radius, snr);
    }
  }
  return WeightedSnapshot(std::move(w));
}

/// Radius used by a scenario: the fixed value if configured, otherwise one uniform draw.
inline double scenario_radius(const ScenarioConfig& cfg, Rng& rng) {
  if (cfg.comm_radius > 0.0) return cfg.comm_radius;
  return detail::uniform(rng, cfg.comm_radius_min, cfg.comm_radius_max);
}

/// Simulates `warmup_steps + duration / sampling_interval` sampling periods and keeps the
/// snapshots after the warm-up.
inline Dataset run_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.rng_seed);
  Dataset ds;
  ds.n = cfg.num_uavs;
  ds.seed = cfg.rng_seed;
  ds.comm_radius = scenario_radius(cfg, rng);
  SwarmState swarm = initial_swarm(cfg, rng);
  const int per_sample = cfg.ticks_per_sample();
  const int total = cfg.warmup_steps + cfg.snapshot_count();
  ds.snapshots.reserve(static_cast<std::size_t>(cfg.snapshot_count()));
  for (int k = 0; k < total; ++k) {
    for (int t = 0; t < per_sample; ++t) step(swarm, cfg, rng);
    WeightedSnapshot snap = sample_snapshot(swarm, ds.comm_radius, cfg, rng);
    if (k >= cfg.warmup_steps) ds.snapshots.push_back(std::move(snap));
  }
  return ds;
}

struct SequenceStats {
  int min_edges = 0;
  int max_edges = 0;
  double avg_edges = 0.0;
  double avg_density = 0.0;
};

inline SequenceStats sequence_stats(const std::vector<WeightedSnapshot>& seq) {
  SequenceStats st;
  if (seq.empty()) return st;
  st.min_edges = std::numeric_limits<int>::max();
  for (const auto& s : seq) {
    const int e = s.edge_count();
    st.min_edges = std::min(st.min_edges, e);
    st.max_edges = std::max(st.max_edges, e);
    st.avg_edges += e;
    st.avg_density += density(s);
  }
  st.avg_edges /= static_cast<double>(seq.size());
  st.avg_density /= static_cast<double>(seq.size());
  return st;
}

}  // namespace must
