#pragma once

// Node- and link-level routing metrics and the composite path value used to
// rank candidate routes.

#include "dynaroute/vehicle_dynamics.hpp"

#include <span>
#include <vector>

namespace dynaroute {

inline constexpr double SD_CAP = 1000.0;     // link lifetime cap, s
inline constexpr double SPEED_EPS = 1e-3;    // m/s
inline constexpr double SIGMA_EPS = 1e-3;    // m/s

struct NodeStatus {
  int queue_len = 0;
  int queue_max = 20;
  int relayed_ok = 0;
  int relay_received = 0;
};

struct MetricWeights {
  double kappa1 = 0.4;
  double kappa2 = 0.3;
  double kappa3 = 0.3;

  void validate() const {
    if (kappa1 < 0 || kappa2 < 0 || kappa3 < 0) throw std::invalid_argument("metric weights must be >= 0");
  }
};

struct HopMetrics {
  double staying_time = 0;    // s
  double direction_ratio = 1; // remaining-distance ratio
  double delivery_prob = 0;
};

struct PathCandidate {
  std::vector<int> hops;  // node ids, source first
  std::vector<HopMetrics> per_hop;
  std::vector<double> node_weights;  // weight of each hop's receiving node
  double sigma_v = 0;
  double path_value = 0;

  int hop_count() const { return static_cast<int>(hops.size()) - 1; }
};

int vehicle_status(int q, int q_max);

int neighbor_transmit_count(std::span<const int> statuses);

/// Successfully relayed over received; a node with no relay history counts as reliable.
double relay_reliability(int relayed_ok, int relay_received);

/// Remaining link lifetime (R_v - dp)/|v_i - v_j|, capped at SD_CAP for
/// near-equal speeds. Throws std::out_of_range when dp exceeds R_v.
double staying_time(double r_v, double delta_p, double v_i, double v_j);

/// |p_z - p_j| / |p_z - p_s|: 0 at the destination, 1 with no progress.
double direction_ratio(const Vec2d& p_j, const Vec2d& p_s, const Vec2d& p_z);

/// Larger-is-better form of the direction ratio used inside the path value.
double progress_score(double ratio);

/// Population standard deviation of the speeds along a path.
double velocity_variance(std::span<const double> velocities);

double node_weight(int status, int n_path, double reliability, const MetricWeights& weights, bool can_transmit);

/// sd * w * progress / max(sigma_v, SIGMA_EPS) * P for one hop.
double hop_value(const HopMetrics& hop, double weight, double sigma_v);

/// Combines hop values into one path score (product).
double aggregate_hop_values(std::span<const double> values);

double path_value(std::span<const HopMetrics> hops, std::span<const double> node_weights, double sigma_v);

}  // namespace dynaroute
