#pragma once

// Scenario configuration, its text file format and the initial world layout.

#include "dynaroute/channel_model.hpp"
#include "dynaroute/joint_optimizer.hpp"
#include "dynaroute/link_metrics.hpp"
#include "dynaroute/platoon_control.hpp"
#include "dynaroute/vehicle_dynamics.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace dynaroute {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class LossCase { Case1, Case2 };
enum class TrafficModel { Poisson, Periodic };
enum class LeaderProfile { Standard, Constant };

struct LossConfig {
  double case1_drop = 0.1;
  double case2_p_good_to_bad = 0.15;
  double case2_p_bad_to_good = 0.35;
  int case2_contender_factor = 2;
};

struct TrafficConfig {
  TrafficModel model = TrafficModel::Poisson;
  double rate = 0.5;      // packets per second per vehicle at load 1
  double load = 1.0;      // arrival-rate multiplier
  double interval = 0.5;  // s, periodic model
  double size_min = 1.0e6;  // bits
  double size_max = 1.5e6;
  int deadline_slots = 10;
  double demand_bits = 5e9;  // per-vehicle demand, reported only
};

struct RoutingConfig {
  int max_hops = 3;
  int path_cap = 8;
  int hop_slack = 0;  // candidates may exceed the fewest available hops by this much
  int schedule_horizon = 10;  // slots
  int reoptimize_every = 5;   // slots between joint optimizations
  double beacon_bits = 2000;
};

struct RsuConfig {
  double first = 250;     // m, along the road
  double spacing = 500;   // m
  int count = 4;
  double lateral = -10;   // m, from lane 0 centre
};

struct ScenarioConfig {
  int n_platoons = 2;
  int vehicles_per_platoon = 4;
  double desired_gap = 10.0;  // bumper to bumper, m
  double dt = 0.1;
  double duration = 30.0;
  double initial_speed = 15.0;
  double lane_width = 4.5;
  double platoon_stagger = 5.0;  // longitudinal offset of each further platoon, m
  double comm_range = 300.0;     // R_v, m
  int n_channels = 4;
  double err_v_bound = 6.0;
  double err_p_bound = 3.0;
  double epsilon = 3e-5;
  LossCase loss_case = LossCase::Case1;
  LeaderProfile leader_profile = LeaderProfile::Standard;
  ChannelParams channel;
  Safety safety;
  PlatoonConfig platoon;
  MetricWeights metric_weights;
  GaParams ga;
  LossConfig loss;
  TrafficConfig traffic;
  RoutingConfig routing;
  RsuConfig rsu;

  ScenarioConfig();
  int n_slots() const;
  int n_vehicles() const { return n_platoons * vehicles_per_platoon; }
  /// Throws ConfigError describing the first violated invariant.
  void validate() const;
};

/// Parses the JSON text format; unknown keys and wrong types are ConfigError.
ScenarioConfig parse_config(const std::string& text);
ScenarioConfig load_config(const std::string& path);
std::string dump_config(const ScenarioConfig& config);

/// Leader acceleration profile, m/s^2.
double lead_acceleration(double t);

struct VehicleAgent {
  int id = 0;
  int platoon = 0;
  int index = 0;  // 0 = leader
  double lane_y = 0;
  State state;
};

struct Rsu {
  int id = 0;
  Vec2d position = Vec2d::Zero();
};

struct World {
  std::vector<VehicleAgent> vehicles;
  std::vector<Rsu> rsus;
};

World build_scenario(const ScenarioConfig& config);

}  // namespace dynaroute
