#pragma once

// Line-of-sight link budget, Shannon rate, slot success probabilities and the
// packet-loss process that decides whether a neighbour's state arrives.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>

namespace dynaroute {

struct ChannelParams {
  double fc = 5.9e9;              // carrier frequency, Hz
  double c = 299792458.0;         // speed of light, m/s
  double eta_los = 18.0;          // LoS excess loss, dB
  double p_tx = 23.0;             // transmit power, dBm
  double n_noise = -96.0;         // noise power, dBm
  double bandwidth = 10e6;        // B, Hz
  double tau_slot = 0.1;          // slot length, s
  double varpi = -96.0;           // normalized power parameter, dB
  std::optional<double> varpi_linear_override;
  bool varpi_from_link_budget = false;
  double xi0 = 0.0;               // SINR reception threshold, dB
  double l0 = 50.0;               // V2V vertical offset, m
  double l_v2i_0 = 200.0;         // V2I vertical offset, m

  void validate() const {
    if (!(fc > 0)) throw std::invalid_argument("channel: fc must be positive");
    if (!(bandwidth > 0)) throw std::invalid_argument("channel: bandwidth must be positive");
    if (!(tau_slot > 0)) throw std::invalid_argument("channel: tau_slot must be positive");
    if (l0 < 0 || l_v2i_0 < 0) throw std::invalid_argument("channel: offsets must be >= 0");
    if (varpi_linear_override && !(*varpi_linear_override > 0))
      throw std::invalid_argument("channel: varpi_linear_override must be positive");
  }
};

template <typename Scalar>
Scalar db_to_linear(Scalar db) {
  return std::pow(Scalar(10), db / Scalar(10));
}

template <typename Scalar>
Scalar path_loss_los(Scalar distance, const ChannelParams& params) {
  if (!(distance > 0)) throw std::invalid_argument("path_loss_los: distance must be positive");
  const Scalar fc = params.fc;
  const Scalar c = params.c;
  return Scalar(20) * std::log10(Scalar(4) * std::numbers::pi_v<Scalar> * fc / c) +
         Scalar(20) * std::log10(distance) + Scalar(params.eta_los);
}

template <typename Scalar>
Scalar sinr_db(Scalar p_tx, Scalar path_loss, Scalar n_noise) {
  return p_tx - path_loss - n_noise;
}

template <typename Scalar>
Scalar shannon_rate(Scalar bandwidth, Scalar sinr) {
  if (!(bandwidth > 0)) throw std::invalid_argument("shannon_rate: bandwidth must be positive");
  return bandwidth * std::log2(Scalar(1) + db_to_linear(sinr));
}

/// Euclidean separation with a vertical offset, sqrt(|p_j - p_i|^2 + l0^2).
template <typename Scalar>
Scalar relative_distance(const Eigen::Matrix<Scalar, 2, 1>& p_i, const Eigen::Matrix<Scalar, 2, 1>& p_j, Scalar l0) {
  return std::sqrt((p_j - p_i).squaredNorm() + l0 * l0);
}

/// SINR at one metre, the value of varpi implied by the link budget.
inline double link_budget_varpi_db(const ChannelParams& p) {
  return p.p_tx - p.n_noise - path_loss_los(1.0, p);
}

/// Linear-scale varpi used by the slot success probability.
inline double varpi_linear(const ChannelParams& p) {
  if (p.varpi_linear_override) return *p.varpi_linear_override;
  if (p.varpi_from_link_budget) return db_to_linear(link_budget_varpi_db(p));
  return db_to_linear(p.varpi);
}

/// Probability that theta bits cross a link of length distance_l within one
/// slot while n_contenders share the channel.
template <typename Scalar>
Scalar slot_success_prob(Scalar theta, int n_contenders, const ChannelParams& params, Scalar distance_l) {
  if (theta < 0) throw std::invalid_argument("slot_success_prob: theta must be >= 0");
  if (n_contenders < 1) throw std::invalid_argument("slot_success_prob: need at least one contender");
  if (!(distance_l > 0)) throw std::invalid_argument("slot_success_prob: distance must be positive");
  const Scalar efficiency = theta * Scalar(n_contenders) / (Scalar(params.bandwidth) * Scalar(params.tau_slot));
  const Scalar excess = std::expm1(efficiency * std::numbers::ln2_v<Scalar>);  // 2^x - 1
  return std::exp(-excess / Scalar(varpi_linear(params)) * distance_l * distance_l);
}

/// Product of per-slot probabilities; the empty product is 1.
template <typename Scalar>
Scalar multi_slot_success_prob(std::span<const Scalar> per_slot) {
  Scalar total{1};
  for (Scalar p : per_slot) {
    if (p < 0 || p > 1) throw std::invalid_argument("multi_slot_success_prob: probability out of range");
    total *= p;
  }
  return total;
}

struct LinkSnapshot {
  double distance = 0;       // L_ij, m
  double path_loss = 0;      // dB
  double sinr = 0;           // dB
  double rate = 0;           // bit/s
  double delivery_prob = 0;  // one-slot success probability
};

/// Evaluates the full link budget for a pair at planar separation `planar`.
LinkSnapshot make_link_snapshot(double planar, double offset, double theta, int n_contenders,
                                const ChannelParams& params);

enum class LossKind { Bernoulli, GilbertElliott };
enum class ChannelState { Good, Bad };

/// Per-link packet-loss process. Bernoulli draws independently (with an
/// optional extra drop probability); Gilbert-Elliott additionally forces a
/// loss whenever the two-state chain sits in Bad.
struct LossProcess {
  LossKind kind = LossKind::Bernoulli;
  double p_good_to_bad = 0.0;
  double p_bad_to_good = 1.0;
  double drop_prob = 0.0;
  ChannelState current_state = ChannelState::Good;
  std::uint64_t rng_seed = 0;
  std::mt19937_64 rng{0};

  LossProcess() = default;
  LossProcess(LossKind k, double p_gb, double p_bg, double drop, std::uint64_t seed);

  /// Stationary fraction of time spent in Bad.
  double stationary_bad() const;
};

/// One delivery draw; returns 1 on success.
int sample_delivery(double prob, LossProcess& loss);

/// Advances the Gilbert-Elliott chain by one slot; no-op for Bernoulli.
void markov_step(LossProcess& loss);

}  // namespace dynaroute
