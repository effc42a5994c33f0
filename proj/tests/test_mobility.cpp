#include "must/mobility.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace must;

namespace {
ScenarioConfig small(MobilityModel m, std::uint64_t seed = 1) {
  ScenarioConfig c;
  c.mobility_model = m;
  c.num_uavs = 20;
  c.duration = 200;
  c.warmup_steps = 2;
  c.rng_seed = seed;
  return c;
}

SwarmState single(Vec2 p, double speed, double heading) {
  SwarmState s;
  UavState u;
  u.position = p;
  u.speed = speed;
  u.heading = heading;
  s.uavs.push_back(u);
  return s;
}

bool inside(const SwarmState& s, double side) {
  for (const auto& u : s.uavs)
    if (u.position.x < 0.0 || u.position.y < 0.0 || u.position.x > side || u.position.y > side) return false;
  return true;
}

constexpr MobilityModel kModels[] = {MobilityModel::RandomWalk, MobilityModel::ManhattanGrid,
                                     MobilityModel::ReferencePointGroup, MobilityModel::GaussMarkov};
}  // namespace

TEST(LinkWeight, Examples) {
  EXPECT_EQ(link_weight(1500, 1000, 10), 0.0);
  EXPECT_DOUBLE_EQ(link_weight(0, 1000, 1), 1.0);
  EXPECT_DOUBLE_EQ(link_weight(500, 1000, 3), 1.0);
  EXPECT_EQ(link_weight(1000, 1000, 7), 0.0);
  EXPECT_EQ(link_weight(10, 1000, 0), 0.0);
}

TEST(RandomWalk, MovesAlongHeadingBetweenRedraws) {
  ScenarioConfig c;
  Rng rng(1);
  SwarmState s = single({5000, 5000}, 30, 0.7);
  s.tick = 1;  // not an epoch boundary
  step_random_walk(s, c, rng);
  EXPECT_NEAR(distance(s.uavs[0].position, {5000, 5000}), 30.0, 1e-9);
  EXPECT_NEAR(s.uavs[0].position.x, 5000 + 30 * std::cos(0.7), 1e-9);
  EXPECT_NEAR(s.uavs[0].position.y, 5000 + 30 * std::sin(0.7), 1e-9);
}

TEST(RandomWalk, ReflectsOffEastWall) {
  ScenarioConfig c;
  Rng rng(1);
  const double side = c.area_side();
  SwarmState s = single({side - 1.0, 5000}, 30, 0.0);
  s.tick = 1;
  step_random_walk(s, c, rng);
  EXPECT_NEAR(s.uavs[0].position.x, side - 29.0, 1e-9);
  EXPECT_NEAR(s.uavs[0].position.y, 5000.0, 1e-9);
  EXPECT_NEAR(s.uavs[0].heading, std::numbers::pi, 1e-12);
}

TEST(RandomWalk, RedrawsAtEpochBoundary) {
  ScenarioConfig c;
  Rng rng(3);
  SwarmState s = single({5000, 5000}, 1000, 0.0);
  step_random_walk(s, c, rng);  // tick 0 is a boundary
  EXPECT_GE(s.uavs[0].speed, c.speed_min);
  EXPECT_LE(s.uavs[0].speed, c.speed_max);
}

TEST(RandomWalk, HeadingUniformChiSquare) {
  ScenarioConfig c;
  c.epoch = c.tick;
  c.num_uavs = 50;
  Rng rng(11);
  SwarmState s = initial_swarm(c, rng);
  constexpr int kBins = 12;
  std::array<int, kBins> counts{};
  int total = 0;
  for (int t = 0; t < 400; ++t) {
    step_random_walk(s, c, rng);
    // headings are redrawn every tick; reflection may mirror them, so sample those away from walls
    for (const auto& u : s.uavs) {
      const double m = 40.0;
      if (u.position.x < m || u.position.y < m || u.position.x > c.area_side() - m || u.position.y > c.area_side() - m)
        continue;
      ++counts[static_cast<std::size_t>(std::min(kBins - 1, static_cast<int>(u.heading / (2 * std::numbers::pi) * kBins)))];
      ++total;
    }
  }
  double chi2 = 0.0;
  const double expect = static_cast<double>(total) / kBins;
  for (int k : counts) chi2 += (k - expect) * (k - expect) / expect;
  EXPECT_LT(chi2, 31.26);  // 0.999 quantile, 11 degrees of freedom
}

TEST(ManhattanGrid, StraightOnlyKeepsDirectionUntilBoundary) {
  ScenarioConfig c;
  c.mobility_model = MobilityModel::ManhattanGrid;
  c.p_straight = 1.0;
  c.p_left = c.p_right = 0.0;
  const auto p = manhattan_turn_probabilities(3, 4, 0, c);
  EXPECT_EQ(p[0], 1.0);
  EXPECT_EQ(p[1] + p[2] + p[3], 0.0);
  // at the east edge straight is blocked; left and right split evenly as their weights are zero
  const auto q = manhattan_turn_probabilities(c.grid_cells(), 4, 0, c);
  EXPECT_DOUBLE_EQ(q[1], 0.5);
  EXPECT_DOUBLE_EQ(q[3], 0.5);
}

TEST(ManhattanGrid, CornerRenormalization) {
  ScenarioConfig c;
  c.mobility_model = MobilityModel::ManhattanGrid;
  const int n = c.grid_cells();
  // heading +x into the north-east corner: straight (+x) and left (+y) leave the grid, right (-y) stays
  auto p = manhattan_turn_probabilities(n, n, 0, c);
  EXPECT_DOUBLE_EQ(p[3], 1.0);
  // heading +x onto the east edge mid-way: left (+y) 0.25 and right (-y) 0.25 -> 0.5 each
  p = manhattan_turn_probabilities(n, 5, 0, c);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
  EXPECT_DOUBLE_EQ(p[3], 0.5);
  // heading +y along the west edge: straight 0.5, right (+x) 0.25; left (-x) infeasible
  p = manhattan_turn_probabilities(0, 5, 1, c);
  EXPECT_DOUBLE_EQ(p[1], 0.5 / 0.75);
  EXPECT_DOUBLE_EQ(p[0], 0.25 / 0.75);
  EXPECT_EQ(p[2], 0.0);
}

TEST(ManhattanGrid, StaysOnStreets) {
  ScenarioConfig c = small(MobilityModel::ManhattanGrid);
  Rng rng(5);
  SwarmState s = initial_swarm(c, rng);
  for (int t = 0; t < 600; ++t) {
    step_manhattan_grid(s, c, rng);
    for (const auto& u : s.uavs) {
      const double fx = std::fmod(u.position.x, c.grid_spacing), fy = std::fmod(u.position.y, c.grid_spacing);
      const bool on_x_street = std::min(fy, c.grid_spacing - fy) < 1e-6;
      const bool on_y_street = std::min(fx, c.grid_spacing - fx) < 1e-6;
      ASSERT_TRUE(on_x_street || on_y_street);
    }
    ASSERT_TRUE(inside(s, c.area_side()));
  }
}

TEST(ManhattanGrid, SpacingMustTile) {
  ScenarioConfig c;
  c.mobility_model = MobilityModel::ManhattanGrid;
  c.grid_spacing = 3000;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(ReferencePointGroup, ZeroRadiusCoincidesWithReference) {
  ScenarioConfig c = small(MobilityModel::ReferencePointGroup);
  c.rpg_member_radius = 0.0;
  Rng rng(2);
  SwarmState s = initial_swarm(c, rng);
  for (int t = 0; t < 100; ++t) {
    step_reference_point_group(s, c, rng);
    for (const auto& u : s.uavs) EXPECT_EQ(u.position, s.groups[static_cast<std::size_t>(u.group)].position);
  }
}

TEST(ReferencePointGroup, ReachesWaypointInDistanceOverSpeed) {
  ScenarioConfig c = small(MobilityModel::ReferencePointGroup);
  c.rpg_groups = 1;
  Rng rng(4);
  SwarmState s = initial_swarm(c, rng);
  auto& g = s.groups[0];
  g.position = {2000, 5000};
  g.waypoint = {5000, 5000};
  g.speed = 30;
  for (int t = 0; t < 99; ++t) step_reference_point_group(s, c, rng);
  EXPECT_NEAR(s.groups[0].position.x, 2000 + 99 * 30.0, 1e-6);
  step_reference_point_group(s, c, rng);  // 3000 m / 30 m/s = 100 s
  EXPECT_NE(s.groups[0].waypoint, (Vec2{5000, 5000}));
}

TEST(ReferencePointGroup, GroupSizes) {
  ScenarioConfig c;
  EXPECT_EQ(rpg_group_sizes(c), (std::vector<int>{25, 25, 25, 25}));
  c.num_uavs = 10;
  c.rpg_groups = 3;
  EXPECT_EQ(rpg_group_sizes(c), (std::vector<int>{4, 3, 3}));
}

TEST(ReferencePointGroup, MembersStayWithinRadius) {
  ScenarioConfig c = small(MobilityModel::ReferencePointGroup);
  Rng rng(6);
  SwarmState s = initial_swarm(c, rng);
  for (int t = 0; t < 300; ++t) {
    step_reference_point_group(s, c, rng);
    for (const auto& u : s.uavs) EXPECT_LE(u.offset.norm(), c.rpg_member_radius + 1e-9);
  }
}

TEST(GaussMarkov, AlphaOneFreezesSpeedAndHeading) {
  ScenarioConfig c = small(MobilityModel::GaussMarkov);
  c.gm_alpha = 1.0;
  c.gm_edge_margin = 0.0;
  Rng rng(7);
  SwarmState s = single({5000, 5000}, 27, 1.0);
  for (int t = 0; t < 50; ++t) step_gauss_markov(s, c, rng);
  EXPECT_EQ(s.uavs[0].speed, 27.0);
  EXPECT_DOUBLE_EQ(s.uavs[0].heading, 1.0);
}

TEST(GaussMarkov, AlphaZeroNoNoiseGivesMeanSpeed) {
  ScenarioConfig c = small(MobilityModel::GaussMarkov);
  c.gm_alpha = 0.0;
  c.gm_sigma_speed = c.gm_sigma_heading = 0.0;
  Rng rng(8);
  SwarmState s = single({5000, 5000}, 26, 1.0);
  for (int t = 0; t < 5; ++t) {
    step_gauss_markov(s, c, rng);
    EXPECT_DOUBLE_EQ(s.uavs[0].speed, c.mean_speed());
  }
}

TEST(GaussMarkov, StationaryAtMeanWithoutNoise) {
  ScenarioConfig c = small(MobilityModel::GaussMarkov);
  c.gm_sigma_speed = c.gm_sigma_heading = 0.0;
  Rng rng(9);
  SwarmState s = single({5000, 5000}, 30, 1.0);
  step_gauss_markov(s, c, rng);
  EXPECT_DOUBLE_EQ(s.uavs[0].speed, 30.0);
}

TEST(Snapshot, OutOfRangePairHasNoLink) {
  ScenarioConfig c;
  Rng rng(10);
  SwarmState s = single({0, 0}, 0, 0);
  s.uavs.push_back(s.uavs[0]);
  s.uavs[1].position = {1500, 0};
  EXPECT_EQ(sample_snapshot(s, 1000, c, rng)(0, 1), 0.0);
}

TEST(Snapshot, DeterministicChannelCoLocated) {
  ScenarioConfig c;
  c.snr_std = 0.0;
  Rng rng(11);
  SwarmState s = single({100, 100}, 0, 0);
  s.uavs.push_back(s.uavs[0]);
  EXPECT_DOUBLE_EQ(sample_snapshot(s, 1000, c, rng)(0, 1), std::log2(1.0 + c.snr_mean));
}

TEST(Snapshot, LinkIffInRangeForPositiveSnr) {
  ScenarioConfig c;
  c.snr_std = 0.0;
  testkit::Gen g(12);
  for (int it = 0; it < 20; ++it) {
    c.rng_seed = static_cast<std::uint64_t>(it);
    Rng rng(c.rng_seed);
    SwarmState s = initial_swarm(c, rng);
    const double r = testkit::uniform(g, 500, 3000);
    const WeightedSnapshot w = sample_snapshot(s, r, c, rng);
    for (int i = 0; i < w.n(); ++i)
      for (int j = 0; j < w.n(); ++j)
        if (i != j) {
          ASSERT_EQ(w(i, j) > 0.0, distance(s.uavs[static_cast<std::size_t>(i)].position,
                                            s.uavs[static_cast<std::size_t>(j)].position) < r);
        }
  }
}

TEST(Scenario, DefaultsGiveEightySnapshots) {
  ScenarioConfig c;
  EXPECT_EQ(c.snapshot_count(), 80);
  ScenarioConfig q = small(MobilityModel::RandomWalk);
  q.num_uavs = 5;
  q.duration = 800;
  EXPECT_EQ(run_scenario(q).snapshots.size(), 80u);
}

TEST(Scenario, RejectsTooFewSnapshots) {
  ScenarioConfig c;
  c.min_snapshots = 81;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ScenarioConfig{};
  c.sampling_interval = 7;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(parse_mobility_model("RWP"), ConfigError);
}

TEST(Scenario, DeterministicAndValidForEveryModel) {
  for (MobilityModel m : kModels) {
    const ScenarioConfig c = small(m, 17);
    const Dataset a = run_scenario(c), b = run_scenario(c);
    EXPECT_EQ(a, b) << to_string(m);
    EXPECT_EQ(a.snapshots.size(), 20u);
    EXPECT_GE(a.comm_radius, 1000.0);
    EXPECT_LE(a.comm_radius, 2000.0);
    for (const auto& s : a.snapshots) {
      const Matrix& w = s.weights();
      EXPECT_EQ(w, w.transpose());
      EXPECT_TRUE(w.diagonal().isZero());
      EXPECT_GE(w.minCoeff(), 0.0);
    }
    EXPECT_NE(run_scenario(small(m, 18)), a);
  }
}

TEST(Scenario, PositionsInsideAndSpeedsInRange) {
  for (MobilityModel m : kModels) {
    ScenarioConfig c = small(m, 21);
    Rng rng(c.rng_seed);
    SwarmState s = initial_swarm(c, rng);
    for (int t = 0; t < 2000; ++t) {
      step(s, c, rng);
      ASSERT_TRUE(inside(s, c.area_side())) << to_string(m) << " tick " << t;
      for (const auto& u : s.uavs) {
        ASSERT_GE(u.speed, c.speed_min) << to_string(m);
        ASSERT_LE(u.speed, c.speed_max) << to_string(m);
        ASSERT_GE(u.heading, 0.0);
        ASSERT_LT(u.heading, 2 * std::numbers::pi);
      }
    }
  }
}
