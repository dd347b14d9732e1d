#include "dynaroute/link_metrics.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace dynaroute {

int vehicle_status(int q, int q_max) { return q <= q_max ? 1 : 0; }

int neighbor_transmit_count(std::span<const int> statuses) {
  return std::accumulate(statuses.begin(), statuses.end(), 0);
}

double relay_reliability(int relayed_ok, int relay_received) {
  if (relay_received <= 0) return 1.0;
  return static_cast<double>(relayed_ok) / relay_received;
}

double staying_time(double r_v, double delta_p, double v_i, double v_j) {
  if (delta_p > r_v) throw std::out_of_range("staying_time: vehicles out of range");
  const double closing = std::abs(v_i - v_j);
  if (closing < SPEED_EPS) return SD_CAP;
  return std::min((r_v - delta_p) / closing, SD_CAP);
}

double direction_ratio(const Vec2d& p_j, const Vec2d& p_s, const Vec2d& p_z) {
  const double span = (p_z - p_s).norm();
  if (!(span > 0)) throw std::invalid_argument("direction_ratio: source and destination coincide");
  return (p_z - p_j).norm() / span;
}

double progress_score(double ratio) { return 1.0 - std::clamp(ratio, 0.0, 1.0); }

double velocity_variance(std::span<const double> velocities) {
  if (velocities.empty()) throw std::invalid_argument("velocity_variance: empty list");
  const double n = static_cast<double>(velocities.size());
  const double mean = std::accumulate(velocities.begin(), velocities.end(), 0.0) / n;
  double ss = 0;
  for (double v : velocities) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / n);
}

double node_weight(int status, int n_path, double reliability, const MetricWeights& w, bool can_transmit) {
  if (!can_transmit) return 1.0;
  return w.kappa1 * status + w.kappa2 * n_path + w.kappa3 * reliability;
}

double hop_value(const HopMetrics& hop, double weight, double sigma_v) {
  const double sigma = std::max(sigma_v, SIGMA_EPS);
  return hop.staying_time * weight * progress_score(hop.direction_ratio) / sigma * hop.delivery_prob;
}

double aggregate_hop_values(std::span<const double> values) {
  return std::accumulate(values.begin(), values.end(), 1.0, std::multiplies<>());
}

double path_value(std::span<const HopMetrics> hops, std::span<const double> node_weights, double sigma_v) {
  if (hops.size() != node_weights.size()) throw std::invalid_argument("path_value: hop/weight size mismatch");
  if (sigma_v < 0) throw std::invalid_argument("path_value: sigma_v must be >= 0");
  std::vector<double> values;
  values.reserve(hops.size());
  for (std::size_t h = 0; h < hops.size(); ++h) values.push_back(hop_value(hops[h], node_weights[h], sigma_v));
  return aggregate_hop_values(values);
}

}  // namespace dynaroute
