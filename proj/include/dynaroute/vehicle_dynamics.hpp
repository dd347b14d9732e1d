#pragma once

// Nonholonomic vehicle model, admissible inputs, collision cones and the
// mode-dependent barrier functions used by the platoon controller.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>

namespace dynaroute {

template <typename Scalar>
using Vec2 = Eigen::Matrix<Scalar, 2, 1>;

template <typename Scalar>
using StateVec = Eigen::Matrix<Scalar, 4, 1>;

/// Planar pose, heading and speed of one vehicle.
template <typename Scalar>
struct VehicleState {
  Scalar px{0};
  Scalar py{0};
  Scalar psi{0};
  Scalar v{0};

  Vec2<Scalar> position() const { return {px, py}; }
  Vec2<Scalar> velocity() const { return {v * std::cos(psi), v * std::sin(psi)}; }

  /// Stacked as [px, py, psi, v].
  StateVec<Scalar> vec() const { return {px, py, psi, v}; }

  static VehicleState from_vec(const StateVec<Scalar>& x) { return {x(0), x(1), x(2), x(3)}; }

  bool finite() const {
    return std::isfinite(px) && std::isfinite(py) && std::isfinite(psi) && std::isfinite(v);
  }

  bool operator==(const VehicleState&) const = default;
};

template <typename Scalar>
struct ControlInput {
  Scalar r{0};  // turning rate, rad/s
  Scalar a{0};  // acceleration, m/s^2

  Vec2<Scalar> vec() const { return {r, a}; }
  bool operator==(const ControlInput&) const = default;
};

template <typename Scalar>
struct SafetyParams {
  Scalar W{2};        // safe radius
  Scalar l_w{4};      // vehicle length
  Scalar tau1{0.5};   // braking response time
  Scalar tau2{0.5};   // lane change, first stage
  Scalar tau3{0.5};   // lane change, second stage
  Scalar a_max{2.5};
  Scalar d_min{4};    // collision-cone radius, 2W unless overridden
  Scalar alpha{0.2};  // discrete CBF decay rate

  void validate() const {
    if (!(W > 0) || !(l_w > 0)) throw std::invalid_argument("safety: W and l_w must be positive");
    if (tau1 < 0 || tau2 < 0 || tau3 < 0) throw std::invalid_argument("safety: response times must be >= 0");
    if (alpha < 0 || alpha > 1) throw std::invalid_argument("safety: alpha must lie in [0,1]");
    if (!(a_max > 0)) throw std::invalid_argument("safety: a_max must be positive");
    if (!(d_min > 0)) throw std::invalid_argument("safety: d_min must be positive");
  }
};

enum class ManeuverMode { Following, Braking, LaneChange };

/// Thrown when a vehicle is already inside the safety disk of another.
class CollisionImminent : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Wraps an angle into (-pi, pi].
template <typename Scalar>
Scalar wrap_angle(Scalar angle) {
  constexpr Scalar pi = std::numbers::pi_v<Scalar>;
  Scalar wrapped = std::remainder(angle, Scalar(2) * pi);
  if (wrapped <= -pi) wrapped += Scalar(2) * pi;
  return wrapped;
}

/// Forward-Euler step of the unicycle model. The input is assumed clamped.
template <typename Scalar>
VehicleState<Scalar> step(const VehicleState<Scalar>& state, const ControlInput<Scalar>& input, Scalar dt) {
  if (!(dt > 0)) throw std::invalid_argument("step: dt must be positive");
  if (!state.finite() || !std::isfinite(input.r) || !std::isfinite(input.a))
    throw std::invalid_argument("step: non-finite state or input");
  VehicleState<Scalar> next;
  next.px = state.px + state.v * std::cos(state.psi) * dt;
  next.py = state.py + state.v * std::sin(state.psi) * dt;
  next.psi = wrap_angle(state.psi + input.r * dt);
  next.v = state.v + input.a * dt;
  return next;
}

template <typename Scalar>
ControlInput<Scalar> clamp_input(const ControlInput<Scalar>& input, Scalar r_max, Scalar a_max) {
  return {std::clamp(input.r, -r_max, r_max), std::clamp(input.a, -a_max, a_max)};
}

/// Half-angle of the collision cone around a target at distance d_j.
template <typename Scalar>
Scalar collision_cone_half_angle(Scalar d_min, Scalar d_j) {
  if (!(d_min > 0)) throw std::invalid_argument("collision cone: d_min must be positive");
  if (d_j < d_min) throw CollisionImminent("collision cone: already inside safety disk");
  return std::asin(d_min / d_j);
}

/// Angle between the relative velocity (v_i - v_j) and the displacement to j.
/// Returns nothing when the relative velocity or displacement vanishes; the
/// cone lemma only applies to a nonzero relative velocity.
template <typename Scalar>
std::optional<Scalar> relative_bearing_angle(const Vec2<Scalar>& v_rel, const Vec2<Scalar>& r_j) {
  const Scalar nv = v_rel.norm();
  const Scalar nr = r_j.norm();
  if (!(nv > 0) || !(nr > 0)) return std::nullopt;
  const Scalar c = std::clamp(v_rel.dot(r_j) / (nv * nr), Scalar(-1), Scalar(1));
  return std::acos(c);
}

template <typename Scalar>
bool velocity_cone_safe(Scalar lambda, Scalar beta) {
  return lambda >= beta;
}

template <typename Scalar>
Scalar safety_distance(ManeuverMode mode, Scalar delta_p, Scalar v, const SafetyParams<Scalar>& params) {
  const Scalar body = (delta_p - params.l_w) * (delta_p - params.l_w);
  switch (mode) {
    case ManeuverMode::Following:
      return std::sqrt(body);
    case ManeuverMode::Braking: {
      const Scalar stop = v * params.tau1 + v * v / (Scalar(2) * params.a_max);
      return std::sqrt(body + stop);
    }
    case ManeuverMode::LaneChange: {
      const Scalar first = v * params.tau2 + Scalar(0.5) * params.a_max * params.tau2 * params.tau2;
      const Scalar reach = v + params.a_max * params.tau3;
      const Scalar second = (reach * reach - v * v) / (Scalar(2) * params.a_max);
      return std::sqrt(body + first + second);
    }
  }
  return std::sqrt(body);
}

/// Barrier value D_mode^2 - (2W)^2; positive means a safe margin.
template <typename Scalar>
Scalar safety_function(ManeuverMode mode, const Vec2<Scalar>& p_i, const Vec2<Scalar>& p_f, Scalar v,
                       const SafetyParams<Scalar>& params) {
  const Scalar d = safety_distance(mode, (p_i - p_f).norm(), v, params);
  const Scalar two_w = Scalar(2) * params.W;
  return d * d - two_w * two_w;
}

/// Discrete-time CBF decrease condition h(k+1) - h(k) >= -alpha h(k).
template <typename Scalar>
bool cbf_condition_holds(Scalar h_next, Scalar h_curr, Scalar alpha) {
  return h_next - h_curr >= -alpha * h_curr;
}

using State = VehicleState<double>;
using Input = ControlInput<double>;
using Safety = SafetyParams<double>;
using Vec2d = Vec2<double>;

}  // namespace dynaroute
