#include "dynaroute/platoon_control.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dynaroute {

void PlatoonConfig::validate() const {
  if (horizon < 2) throw std::invalid_argument("platoon: horizon must be >= 2");
  if (!(dt > 0)) throw std::invalid_argument("platoon: dt must be positive");
  if (weight_r < 0 || weight_f < 0 || weight_g < 0) throw std::invalid_argument("platoon: weights must be >= 0");
  if (!(gamma > 0)) throw std::invalid_argument("platoon: gamma must be positive");
  if (!(a_min < a_max)) throw std::invalid_argument("platoon: a_min must be below a_max");
  if (!(v_min < v_max)) throw std::invalid_argument("platoon: v_min must be below v_max");
  if (!(r_min < r_max)) throw std::invalid_argument("platoon: r_min must be below r_max");
  if (!(psi_min < psi_max)) throw std::invalid_argument("platoon: psi_min must be below psi_max");
  if (n_samples < 0 || max_iterations < 1) throw std::invalid_argument("platoon: bad candidate-search settings");
}

void set_double_integrator(PlatoonConfig& config) {
  const double dt = config.dt;
  config.a_mat.setIdentity();
  config.a_mat(0, 3) = dt;
  config.f_mat.setZero();
  config.f_mat(0, 1) = 0.5 * dt * dt;
  config.f_mat(2, 0) = dt;
  config.f_mat(3, 1) = dt;
}

std::vector<State> align_plan(const PredictedTrajectory& plan, int plan_slot, int current_slot, int horizon,
                              double dt) {
  if (plan.states.empty()) throw std::invalid_argument("align_plan: empty plan");
  std::vector<State> out;
  out.reserve(horizon + 1);
  const int offset = std::max(0, current_slot - plan_slot);
  const int last = static_cast<int>(plan.states.size()) - 1;
  for (int k = 0; k <= horizon; ++k) {
    const int idx = offset + k;
    if (idx <= last) {
      out.push_back(plan.states[idx]);
    } else if (k > 0) {
      out.push_back(step(out.back(), Input{}, dt));
    } else {
      // Constant-speed extrapolation beyond the received plan.
      State s = plan.states[last];
      for (int m = last; m < idx; ++m) s = step(s, Input{}, dt);
      out.push_back(s);
    }
  }
  return out;
}

namespace {

Eigen::Vector4d neighbor_error(const State& x, const NeighborState& n) {
  Eigen::Vector4d e = x.vec() - n.state.vec();
  e(0) += n.offset.x();
  e(1) += n.offset.y();
  e(2) = wrap_angle(e(2));
  return e;
}

Eigen::Vector4d state_error(const State& a, const State& b) {
  Eigen::Vector4d e = a.vec() - b.vec();
  e(2) = wrap_angle(e(2));
  return e;
}

}  // namespace

double stage_cost(const Input& input, const State& predicted, const State& reference,
                  const std::vector<NeighborState>& neighbors, const PlatoonConfig& config) {
  double cost = config.weight_r * input.vec().norm() + config.weight_f * state_error(predicted, reference).norm();
  for (const auto& n : neighbors) cost += config.weight_g * neighbor_error(predicted, n).norm();
  return cost;
}

double trajectory_deviation(const PredictedTrajectory& traj, int first, int last, double weight_g) {
  double total = 0;
  for (int k = first; k <= last; ++k) {
    if (k < 0 || k >= static_cast<int>(traj.states.size()) || k >= static_cast<int>(traj.reference.size()))
      throw std::out_of_range("trajectory_deviation: index outside trajectory");
    total += weight_g * state_error(traj.states[k], traj.reference[k]).norm();
  }
  return total;
}

bool self_deviation_ok(const PredictedTrajectory& new_traj, const PredictedTrajectory& old_traj, double gamma,
                       const PlatoonConfig& config) {
  const int t = config.horizon;
  const double fresh = trajectory_deviation(new_traj, 1, t - 1, config.weight_g);
  const double previous = trajectory_deviation(old_traj, 0, t - 2, config.weight_g);
  return gamma * fresh <= previous;
}

Eigen::VectorXd propagate_state(const Eigen::VectorXd& x_i, const Eigen::VectorXd& u_i,
                                const Eigen::VectorXd& x_j_last, int delta, const Eigen::MatrixXd& a_mat,
                                const Eigen::MatrixXd& f_mat) {
  if (a_mat.rows() != x_i.size() || a_mat.cols() != x_i.size() || f_mat.rows() != x_i.size() ||
      f_mat.cols() != u_i.size() || x_j_last.size() != x_i.size())
    throw std::invalid_argument("propagate_state: dimension mismatch");
  if (delta != 0 && delta != 1) throw std::invalid_argument("propagate_state: delta must be 0 or 1");
  Eigen::VectorXd next = a_mat * x_i + f_mat * u_i;
  if (delta == 1) next += x_j_last - x_i;
  return next;
}

Eigen::Vector4d propagate_state(const Eigen::Vector4d& x_i, const Eigen::Vector2d& u_i, const Eigen::Vector4d& x_j_last,
                                int delta, const PlatoonConfig& config) {
  if (delta != 0 && delta != 1) throw std::invalid_argument("propagate_state: delta must be 0 or 1");
  Eigen::Vector4d next = config.a_mat * x_i + config.f_mat * u_i;
  if (delta == 1) next += x_j_last - x_i;
  return next;
}

FallbackResult loss_fallback_update(const Eigen::Vector4d& prev_u, const Eigen::Vector4d& prev_x, const State& x_i,
                                    const Input& u_i, const std::vector<ConsensusSample>& neighbors,
                                    const PlatoonConfig& config) {
  FallbackResult out;
  const bool any = std::any_of(neighbors.begin(), neighbors.end(), [](const auto& n) { return n.delta == 1; });
  if (!any) {
    out.u_star = prev_u;
    out.x_star = prev_x;
    out.held = true;
    return out;
  }
  const Eigen::Vector4d xi = x_i.vec();
  Eigen::Vector4d coupling = Eigen::Vector4d::Zero();
  for (const auto& n : neighbors) {
    if (n.delta != 1) continue;
    const Eigen::Vector4d xj = n.x_j.vec();
    Eigen::Vector4d err = xj - xi;
    err(0) -= n.offset.x();
    err(1) -= n.offset.y();
    out.u_star += err;
    coupling += xj - xi;
  }
  out.x_star = config.a_mat * xi + config.f_mat * u_i.vec() + coupling;
  return out;
}

Input consensus_input(const Eigen::Vector4d& u_star, const PlatoonConfig& config) {
  Input u{u_star(2), u_star(0) + u_star(3)};
  u.r = std::clamp(u.r, config.r_min, config.r_max);
  u.a = std::clamp(u.a, config.a_min, config.a_max);
  return u;
}

namespace {

Input clamp_to_config(Input u, const PlatoonConfig& config) {
  u.r = std::clamp(u.r, config.r_min, config.r_max);
  u.a = std::clamp(u.a, config.a_min, config.a_max);
  return u;
}

struct Candidate {
  std::vector<Input> inputs;
  std::vector<State> states;
  double cost = std::numeric_limits<double>::infinity();
  bool safe = false;
  bool deviation_ok = false;
};

}  // namespace

std::vector<State> rollout(const State& x0, const std::vector<Input>& inputs, const PlatoonConfig& config) {
  std::vector<State> states;
  states.reserve(inputs.size() + 1);
  states.push_back(x0);
  for (const auto& u : inputs) {
    State next = step(states.back(), clamp_to_config(u, config), config.dt);
    // Speed saturates at the box instead of reversing.
    next.v = std::max(next.v, 0.0);
    states.push_back(next);
  }
  return states;
}

double horizon_cost(const std::vector<State>& states, const std::vector<Input>& inputs, const DmpcProblem& problem,
                    const PlatoonConfig& config) {
  static const std::vector<NeighborState> none;
  const int t = static_cast<int>(inputs.size());
  double total = 0;
  for (int k = 0; k < t; ++k) {
    if (k == t - 1 && !problem.terminal_weighted) break;
    const auto& nb = k + 1 < static_cast<int>(problem.neighbors.size()) ? problem.neighbors[k + 1] : none;
    total += stage_cost(inputs[k], states[k + 1], problem.reference[k + 1], nb, config);
  }
  return total;
}

bool safety_feasible(const std::vector<State>& states, const SafetyContext& safety, const PlatoonConfig& config) {
  constexpr double tol = 1e-9;
  for (std::size_t k = 1; k < states.size(); ++k) {
    const State& s = states[k];
    if (s.v < config.v_min - tol || s.v > config.v_max + tol) return false;
    if (s.psi < config.psi_min - tol || s.psi > config.psi_max + tol) return false;
  }

  if (safety.predecessor) {
    const auto& pred = *safety.predecessor;
    const std::size_t n = std::min(pred.size(), states.size());
    for (std::size_t k = 0; k + 1 < n; ++k) {
      const double h0 = safety_function(safety.mode, states[k].position(), pred[k].position(), states[k].v, safety.params);
      const double h1 =
          safety_function(safety.mode, states[k + 1].position(), pred[k + 1].position(), states[k + 1].v, safety.params);
      if (!cbf_condition_holds(h1, h0, safety.params.alpha)) return false;
    }
  }

  auto cone_ok = [&](const std::vector<State>& other) {
    const std::size_t n = std::min(other.size(), states.size());
    for (std::size_t k = 1; k < n; ++k) {
      const Vec2d r_j = other[k].position() - states[k].position();
      const double d = r_j.norm();
      if (d < safety.params.d_min) return false;
      const Vec2d v_rel = states[k].velocity() - other[k].velocity();
      const double closing = v_rel.dot(r_j) / d;
      if (closing <= 0) continue;
      if ((d - safety.params.d_min) / closing > config.cone_time_horizon) continue;
      const auto lambda = relative_bearing_angle(v_rel, r_j);
      if (!lambda) continue;
      if (!velocity_cone_safe(*lambda, collision_cone_half_angle(safety.params.d_min, d))) return false;
    }
    return true;
  };
  if (safety.predecessor && !cone_ok(*safety.predecessor)) return false;
  for (const auto& other : safety.others)
    if (!cone_ok(other)) return false;
  return true;
}

DmpcSolution solve_dmpc(const DmpcProblem& problem, const PredictedTrajectory& prev_solution,
                        const SafetyContext& safety, const PlatoonConfig& config, Rng& rng) {
  const int t = config.horizon;
  if (static_cast<int>(problem.reference.size()) < t + 1)
    throw std::invalid_argument("solve_dmpc: reference shorter than horizon");

  std::vector<Candidate> pool;
  auto evaluate = [&](std::vector<Input> inputs) {
    for (auto& u : inputs) u = clamp_to_config(u, config);
    Candidate c;
    c.states = rollout(problem.current, inputs, config);
    c.cost = horizon_cost(c.states, inputs, problem, config);
    c.safe = safety_feasible(c.states, safety, config);
    if (prev_solution.empty()) {
      c.deviation_ok = true;  // cold start
    } else {
      PredictedTrajectory probe{c.states, inputs, problem.reference};
      c.deviation_ok = self_deviation_ok(probe, prev_solution, config.gamma, config);
    }
    c.inputs = std::move(inputs);
    pool.push_back(std::move(c));
  };

  // Deterministic candidates: shifted previous plan, zero input, feedback seed,
  // consensus seed. Max-brake is kept aside as the fallback.
  if (!prev_solution.empty()) {
    std::vector<Input> shifted(prev_solution.inputs.begin() + 1, prev_solution.inputs.end());
    shifted.push_back(prev_solution.inputs.back());
    shifted.resize(t, shifted.back());
    evaluate(std::move(shifted));
  }
  evaluate(std::vector<Input>(t, Input{}));

  {
    std::vector<Input> seed;
    seed.reserve(t);
    State s = problem.current;
    for (int k = 0; k < t; ++k) {
      Input u;
      const double ff = k < static_cast<int>(problem.predecessor_accel.size()) ? problem.predecessor_accel[k] : 0.0;
      u.a = ff;
      if (safety.predecessor && k < static_cast<int>(safety.predecessor->size())) {
        const State& p = (*safety.predecessor)[k];
        const double gap = (p.position() - s.position()).norm() - safety.params.l_w;
        u.a += config.seed_gain_gap * (gap - config.desired_gap) + config.seed_gain_speed * (p.v - s.v);
      } else {
        const State& ref = problem.reference[k];
        u.a += config.seed_gain_gap * (ref.px - s.px) + config.seed_gain_speed * (ref.v - s.v);
      }
      u.r = -config.seed_gain_heading * wrap_angle(s.psi) +
            config.seed_gain_lateral * (problem.reference[k].py - s.py);
      u = clamp_to_config(u, config);
      seed.push_back(u);
      s = step(s, u, config.dt);
    }
    evaluate(std::move(seed));
  }
  if (problem.consensus_seed) evaluate(std::vector<Input>(t, clamp_to_config(*problem.consensus_seed, config)));

  auto best_index = [&](bool need_deviation) -> std::optional<std::size_t> {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      const auto& c = pool[i];
      if (!c.safe || (need_deviation && !c.deviation_ok)) continue;
      if (!best || c.cost < pool[*best].cost) best = i;
    }
    return best;
  };
  auto incumbent = [&]() -> std::size_t {
    if (auto b = best_index(true)) return *b;
    if (auto b = best_index(false)) return *b;
    std::size_t b = 0;
    for (std::size_t i = 1; i < pool.size(); ++i)
      if (pool[i].cost < pool[b].cost) b = i;
    return b;
  };

  // Sampled refinement around the incumbent, shrinking the spread each round.
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int per_round = config.n_samples / config.max_iterations;
  const int extra = config.n_samples % config.max_iterations;
  double spread = 1.0;
  for (int round = 0; round < config.max_iterations; ++round) {
    const std::vector<Input> centre = pool[incumbent()].inputs;
    const int count = per_round + (round < extra ? 1 : 0);
    for (int s = 0; s < count; ++s) {
      const double offset_a = gauss(rng) * config.sample_sigma_a * spread;
      const double offset_r = gauss(rng) * config.sample_sigma_r * spread;
      const double slope_a = gauss(rng) * config.sample_sigma_a * spread / t;
      std::vector<Input> inputs = centre;
      for (int k = 0; k < t; ++k) {
        inputs[k].a += offset_a + slope_a * k;
        inputs[k].r += offset_r;
      }
      evaluate(std::move(inputs));
    }
    spread *= 0.5;
  }

  DmpcSolution out;
  out.candidates_evaluated = static_cast<int>(pool.size());
  std::optional<std::size_t> chosen = best_index(true);
  out.status = SolveStatus::Optimal;
  if (!chosen) {
    chosen = best_index(false);
    out.status = SolveStatus::SelfDeviationRelaxed;
  }
  if (!chosen) {
    std::vector<Input> brake(t, Input{0.0, config.a_min});
    out.trajectory.states = rollout(problem.current, brake, config);
    out.trajectory.inputs = std::move(brake);
    out.trajectory.reference = problem.reference;
    out.cost = horizon_cost(out.trajectory.states, out.trajectory.inputs, problem, config);
    out.status = SolveStatus::InfeasibleFallback;
    return out;
  }
  auto& c = pool[*chosen];
  out.trajectory.states = std::move(c.states);
  out.trajectory.inputs = std::move(c.inputs);
  out.trajectory.reference = problem.reference;
  out.cost = c.cost;
  return out;
}

}  // namespace dynaroute
