#pragma once

// Per-vehicle distributed MPC: stage cost, self-deviation test, the lossy
// consensus state update and a sampled candidate-search solver.

#include "dynaroute/rng.hpp"
#include "dynaroute/vehicle_dynamics.hpp"

#include <Eigen/Dense>

#include <optional>
#include <vector>

namespace dynaroute {

struct PlatoonConfig {
  int horizon = 10;
  double dt = 0.1;
  double desired_gap = 10.0;
  double weight_r = 1.0;
  double weight_f = 1.0;
  double weight_g = 1.0;
  double gamma = 1.0;
  Eigen::Matrix4d a_mat = Eigen::Matrix4d::Identity();
  Eigen::Matrix<double, 4, 2> f_mat = Eigen::Matrix<double, 4, 2>::Zero();
  double v_min = 0.0;
  double v_max = 30.0;
  double psi_min = -0.5;
  double psi_max = 0.5;
  double r_min = -0.5;
  double r_max = 0.5;
  double a_min = -2.5;
  double a_max = 2.5;

  // Candidate search.
  int n_samples = 64;
  int max_iterations = 4;
  double sample_sigma_a = 0.3;
  double sample_sigma_r = 0.02;
  // Velocity-cone test applies once contact is at most this far away in time.
  double cone_time_horizon = 2.0;
  // Gains of the feedback seed candidate.
  double seed_gain_gap = 0.45;
  double seed_gain_speed = 1.2;
  double seed_gain_heading = 2.0;
  double seed_gain_lateral = 0.4;

  void validate() const;
};

/// Linearized update of [px, py, psi, v] for a heading near zero.
void set_double_integrator(PlatoonConfig& config);

/// states has horizon+1 entries starting at the measured state; inputs has horizon.
struct PredictedTrajectory {
  std::vector<State> states;
  std::vector<Input> inputs;
  std::vector<State> reference;  // ideal trajectory the plan was computed against

  bool empty() const { return inputs.empty(); }
};

/// One neighbour as seen by vehicle i.
struct NeighborInfo {
  int id = -1;
  bool is_predecessor = false;
  Vec2d offset = Vec2d::Zero();  // desired p_j - p_i
  PredictedTrajectory plan;      // last received plan
  int plan_slot = 0;             // slot at which plan.states[0] applied
  int receive_slot = 0;
  int delivered = 0;             // delta_ij for the current slot
};

using NeighborView = std::vector<NeighborInfo>;

/// Neighbour states over the horizon, aligned to the current slot; steps past
/// the end of the received plan are extrapolated at constant speed.
std::vector<State> align_plan(const PredictedTrajectory& plan, int plan_slot, int current_slot, int horizon,
                              double dt);

struct NeighborState {
  State state;
  Vec2d offset = Vec2d::Zero();
};

double stage_cost(const Input& input, const State& predicted, const State& reference,
                  const std::vector<NeighborState>& neighbors, const PlatoonConfig& config);

/// Sum of G-weighted deviations from the trajectory's own reference over the
/// index range [first, last].
double trajectory_deviation(const PredictedTrajectory& traj, int first, int last, double weight_g);

bool self_deviation_ok(const PredictedTrajectory& new_traj, const PredictedTrajectory& old_traj, double gamma,
                       const PlatoonConfig& config);

/// x_i(k+1) = A x_i + F u_i + delta (x_j - x_i).
Eigen::Vector4d propagate_state(const Eigen::Vector4d& x_i, const Eigen::Vector2d& u_i, const Eigen::Vector4d& x_j_last,
                                int delta, const PlatoonConfig& config);
Eigen::VectorXd propagate_state(const Eigen::VectorXd& x_i, const Eigen::VectorXd& u_i,
                                const Eigen::VectorXd& x_j_last, int delta, const Eigen::MatrixXd& a_mat,
                                const Eigen::MatrixXd& f_mat);

struct ConsensusSample {
  State x_j;
  Vec2d offset = Vec2d::Zero();  // desired p_j - p_i
  int delta = 0;
};

struct FallbackResult {
  Eigen::Vector4d u_star = Eigen::Vector4d::Zero();
  Eigen::Vector4d x_star = Eigen::Vector4d::Zero();
  bool held = false;
};

/// Prearranges (u*, x*) for the next slot: holds both when nothing arrived,
/// otherwise applies the consensus correction and the lossy state update.
FallbackResult loss_fallback_update(const Eigen::Vector4d& prev_u, const Eigen::Vector4d& prev_x, const State& x_i,
                                    const Input& u_i, const std::vector<ConsensusSample>& neighbors,
                                    const PlatoonConfig& config);

/// Longitudinal/heading projection of a consensus correction onto the inputs.
Input consensus_input(const Eigen::Vector4d& u_star, const PlatoonConfig& config);

struct SafetyContext {
  Safety params;
  ManeuverMode mode = ManeuverMode::Following;
  std::optional<std::vector<State>> predecessor;  // aligned, horizon+1 entries
  std::vector<std::vector<State>> others;         // cone-only obstacles, aligned
};

enum class SolveStatus { Optimal, SelfDeviationRelaxed, InfeasibleFallback };

struct DmpcSolution {
  PredictedTrajectory trajectory;
  double cost = 0;
  SolveStatus status = SolveStatus::Optimal;
  int candidates_evaluated = 0;
};

struct DmpcProblem {
  State current;
  std::vector<State> reference;                        // horizon+1 entries
  std::vector<std::vector<NeighborState>> neighbors;   // per step, horizon+1 entries
  std::vector<double> predecessor_accel;               // feed-forward, horizon entries
  std::optional<Input> consensus_seed;
  bool terminal_weighted = true;
};

/// Rolls a sequence of inputs forward from x0 with clamping.
std::vector<State> rollout(const State& x0, const std::vector<Input>& inputs, const PlatoonConfig& config);

/// Horizon cost of an input sequence.
double horizon_cost(const std::vector<State>& states, const std::vector<Input>& inputs, const DmpcProblem& problem,
                    const PlatoonConfig& config);

/// Box, barrier and velocity-cone feasibility of a rolled-out trajectory.
bool safety_feasible(const std::vector<State>& states, const SafetyContext& safety, const PlatoonConfig& config);

DmpcSolution solve_dmpc(const DmpcProblem& problem, const PredictedTrajectory& prev_solution,
                        const SafetyContext& safety, const PlatoonConfig& config, Rng& rng);

}  // namespace dynaroute
