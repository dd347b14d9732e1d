#include "dynaroute/platoon_control.hpp"

#include "doctest.h"

#include <random>
#include <vector>

using namespace dynaroute;

namespace {

PlatoonConfig base_config() {
  PlatoonConfig c;
  set_double_integrator(c);
  return c;
}

PredictedTrajectory straight(int horizon, double v, double px0, double lateral_error) {
  PredictedTrajectory t;
  for (int k = 0; k <= horizon; ++k) {
    const State ref{px0 + v * 0.1 * k, 0, 0, v};
    State s = ref;
    s.py += lateral_error;
    t.reference.push_back(ref);
    t.states.push_back(s);
    if (k < horizon) t.inputs.push_back(Input{});
  }
  return t;
}

}  // namespace

TEST_CASE("stage cost examples") {
  PlatoonConfig c = base_config();
  const State x{3, 1, 0.1, 12};
  const Vec2d gap(-14, 0);
  const std::vector<NeighborState> formed{{State{3 + 14, 1, 0.1, 12}, Vec2d(14, 0)}};
  CHECK(stage_cost(Input{}, x, x, formed, c) == 0);

  const std::vector<NeighborState> one_off{{State{3 + 15, 1, 0.1, 12}, Vec2d(14, 0)}};
  c.weight_r = c.weight_f = 0;
  c.weight_g = 1;
  CHECK(stage_cost(Input{}, x, x, one_off, c) == doctest::Approx(1));

  c.weight_r = 2;
  c.weight_g = 0;
  CHECK(stage_cost(Input{0, 1}, x, x, {}, c) == doctest::Approx(2));
  (void)gap;
}

TEST_CASE("stage cost: weighted norm oracle and translation invariance") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-5, 5), w(0, 3), shift(-1e3, 1e3);
  for (int i = 0; i < 500; ++i) {
    PlatoonConfig c = base_config();
    c.weight_r = w(rng);
    c.weight_f = w(rng);
    c.weight_g = w(rng);
    const Input in{u(rng) * 0.1, u(rng) * 0.5};
    const State x{u(rng), u(rng), u(rng) * 0.1, 15 + u(rng)};
    const State ref{u(rng), u(rng), u(rng) * 0.1, 15 + u(rng)};
    const State nb{x.px + 14 + u(rng), x.py + u(rng), u(rng) * 0.1, 15 + u(rng)};
    const Vec2d off(14, 0);
    const std::vector<NeighborState> n{{nb, off}};

    const double cost = stage_cost(in, x, ref, n, c);
    // Direct evaluation of the three weighted norms.
    const double tr = std::hypot(in.r, in.a);
    const double tf = std::sqrt(std::pow(x.px - ref.px, 2) + std::pow(x.py - ref.py, 2) +
                                std::pow(wrap_angle(x.psi - ref.psi), 2) + std::pow(x.v - ref.v, 2));
    const double tg = std::sqrt(std::pow(x.px - nb.px + off.x(), 2) + std::pow(x.py - nb.py, 2) +
                                std::pow(wrap_angle(x.psi - nb.psi), 2) + std::pow(x.v - nb.v, 2));
    CHECK(cost == doctest::Approx(c.weight_r * tr + c.weight_f * tf + c.weight_g * tg));
    CHECK(cost >= 0);

    const double dx = shift(rng), dy = shift(rng);
    auto moved = [&](State s) {
      s.px += dx;
      s.py += dy;
      return s;
    };
    const std::vector<NeighborState> n2{{moved(nb), off}};
    CHECK(stage_cost(in, moved(x), moved(ref), n2, c) == doctest::Approx(cost));
  }
}

TEST_CASE("self deviation constraint") {
  PlatoonConfig c = base_config();
  const PredictedTrajectory clean = straight(c.horizon, 15, 0, 0);
  const PredictedTrajectory off = straight(c.horizon, 15, 0, 0.5);
  CHECK(self_deviation_ok(clean, off, 1.0, c));
  CHECK(self_deviation_ok(clean, clean, 1.0, c));
  CHECK(self_deviation_ok(off, off, 1.0, c));
  CHECK_FALSE(self_deviation_ok(off, off, 2.0, c));
  CHECK_FALSE(self_deviation_ok(off, clean, 1.0, c));
  // Index windows: new uses 1..T-1, old uses 0..T-2, each T-1 terms.
  CHECK(trajectory_deviation(off, 1, c.horizon - 1, 1.0) == doctest::Approx(0.5 * (c.horizon - 1)));
  CHECK_THROWS(trajectory_deviation(off, 0, c.horizon + 1, 1.0));
}

TEST_CASE("propagate state") {
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(4, 4);
  const Eigen::MatrixXd zero_f = Eigen::MatrixXd::Zero(4, 2);
  const Eigen::VectorXd x = (Eigen::VectorXd(4) << 1, 2, 0.1, 10).finished();
  const Eigen::VectorXd xj = (Eigen::VectorXd(4) << 15, 2, 0.0, 11).finished();
  const Eigen::VectorXd u = (Eigen::VectorXd(2) << 0.2, 1.0).finished();
  CHECK(propagate_state(x, u, xj, 0, eye, zero_f).isApprox(x));
  CHECK(propagate_state(x, u, xj, 1, eye, zero_f).isApprox(xj));
  CHECK_THROWS(propagate_state(x, u, xj, 2, eye, zero_f));
  CHECK_THROWS(propagate_state(x, u, xj, 0, Eigen::MatrixXd::Identity(3, 3), zero_f));
  CHECK_THROWS(propagate_state(x, Eigen::VectorXd::Zero(3), xj, 0, eye, zero_f));

  const PlatoonConfig c = base_config();
  const Eigen::Vector4d s(0, 0, 0, 10);
  const Eigen::Vector4d next = propagate_state(s, Eigen::Vector2d(0, 0), s, 0, c);
  CHECK(next(0) == doctest::Approx(1));
  CHECK(next(3) == doctest::Approx(10));
  const Eigen::Vector4d pushed = propagate_state(s, Eigen::Vector2d(0, 2), s, 0, c);
  CHECK(pushed(0) == doctest::Approx(1 + 0.5 * 2 * 0.01));
  CHECK(pushed(3) == doctest::Approx(10.2));
}

TEST_CASE("propagate state: delta 0 matches A x + F u for random inputs") {
  const PlatoonConfig c = base_config();
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-10, 10);
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector4d x(u(rng), u(rng), u(rng) * 0.05, 15 + u(rng));
    const Eigen::Vector2d in(u(rng) * 0.05, u(rng) * 0.25);
    const Eigen::Vector4d xj(u(rng), u(rng), u(rng), u(rng));
    CHECK((propagate_state(x, in, xj, 0, c) - (c.a_mat * x + c.f_mat * in)).norm() < 1e-12);
    CHECK((propagate_state(x, in, xj, 1, c) - (c.a_mat * x + c.f_mat * in + xj - x)).norm() < 1e-12);
  }
}

TEST_CASE("loss fallback update") {
  const PlatoonConfig c = base_config();
  const Eigen::Vector4d prev_u(0.3, -0.2, 0.01, 0.7), prev_x(100, 1, 0.02, 14);
  const State xi{50, 0, 0, 15};

  const std::vector<ConsensusSample> lost{{State{64, 0, 0, 15}, Vec2d(14, 0), 0}};
  const FallbackResult held = loss_fallback_update(prev_u, prev_x, xi, Input{0, 1}, lost, c);
  CHECK(held.held);
  CHECK(held.u_star == prev_u);
  CHECK(held.x_star == prev_x);

  const std::vector<ConsensusSample> formed{{State{64, 0, 0, 15}, Vec2d(14, 0), 1}};
  const FallbackResult ok = loss_fallback_update(prev_u, prev_x, xi, Input{}, formed, c);
  CHECK_FALSE(ok.held);
  CHECK(ok.u_star.norm() == doctest::Approx(0));

  const std::vector<ConsensusSample> behind{{State{65, 0, 0, 15}, Vec2d(14, 0), 1}};
  const FallbackResult err = loss_fallback_update(prev_u, prev_x, xi, Input{}, behind, c);
  CHECK((err.u_star - Eigen::Vector4d(1, 0, 0, 0)).norm() < 1e-12);
  // State update: A x + F u + (x_j - x_i).
  const Eigen::Vector4d expect = c.a_mat * xi.vec() + (State{65, 0, 0, 15}.vec() - xi.vec());
  CHECK((err.x_star - expect).norm() < 1e-12);

  const Input ci = consensus_input(Eigen::Vector4d(1, 0, 9, 0.5), c);
  CHECK(ci.a == doctest::Approx(1.5));
  CHECK(ci.r == doctest::Approx(c.r_max));
}

TEST_CASE("loss fallback: total loss holds the values indefinitely") {
  const PlatoonConfig c = base_config();
  Eigen::Vector4d u(0.4, 0.1, 0, 0.2), x(10, 0, 0, 12);
  const Eigen::Vector4d u0 = u, x0 = x;
  const std::vector<ConsensusSample> lost{{State{24, 0, 0, 12}, Vec2d(14, 0), 0},
                                          {State{-4, 0, 0, 12}, Vec2d(-14, 0), 0}};
  for (int k = 0; k < 50; ++k) {
    const FallbackResult r = loss_fallback_update(u, x, State{10.0 + k, 0, 0, 12}, Input{0, 0.3}, lost, c);
    u = r.u_star;
    x = r.x_star;
  }
  CHECK(u == u0);
  CHECK(x == x0);
}

TEST_CASE("align plan pads at constant speed") {
  PredictedTrajectory p;
  p.states = {State{0, 0, 0, 10}, State{1, 0, 0, 10}, State{2, 0, 0, 10}};
  p.inputs = {Input{}, Input{}};
  const auto a = align_plan(p, 5, 6, 4, 0.1);
  REQUIRE(a.size() == 5);
  CHECK(a[0].px == doctest::Approx(1));
  CHECK(a[1].px == doctest::Approx(2));
  CHECK(a[4].px == doctest::Approx(5));
  const auto far = align_plan(p, 0, 10, 2, 0.1);
  CHECK(far[0].px == doctest::Approx(10));
  CHECK_THROWS(align_plan(PredictedTrajectory{}, 0, 0, 2, 0.1));
}

namespace {

struct FollowerSetup {
  PlatoonConfig config = base_config();
  DmpcProblem problem;
  SafetyContext safety;
};

// Follower 14 m behind a predecessor (10 m bumper gap), both at speed v, the
// predecessor accelerating at accel over the horizon.
FollowerSetup follower(double v, double accel) {
  FollowerSetup f;
  const int t = f.config.horizon;
  const double dt = f.config.dt;
  f.problem.current = State{0, 0, 0, v};
  std::vector<State> pred{State{14, 0, 0, v}};
  for (int k = 0; k < t; ++k) pred.push_back(step(pred.back(), Input{0, accel}, dt));
  for (int k = 0; k <= t; ++k) {
    State ref = pred[k];
    ref.px -= 14;
    f.problem.reference.push_back(ref);
    f.problem.neighbors.push_back({NeighborState{pred[k], Vec2d(14, 0)}});
  }
  f.problem.predecessor_accel.assign(t, accel);
  f.safety.predecessor = pred;
  return f;
}

}  // namespace

TEST_CASE("solve_dmpc: stationary formation selects zero input") {
  FollowerSetup f = follower(0.0, 0.0);
  Rng rng(1);
  const DmpcSolution s = solve_dmpc(f.problem, PredictedTrajectory{}, f.safety, f.config, rng);
  CHECK(s.status == SolveStatus::Optimal);
  CHECK(s.cost == doctest::Approx(0));
  for (const auto& u : s.trajectory.inputs) {
    CHECK(u.a == 0);
    CHECK(u.r == 0);
  }
}

TEST_CASE("solve_dmpc: accelerating predecessor gives positive bounded input") {
  FollowerSetup f = follower(15.0, 1.0);
  Rng rng(2);
  const DmpcSolution s = solve_dmpc(f.problem, PredictedTrajectory{}, f.safety, f.config, rng);
  REQUIRE(s.status != SolveStatus::InfeasibleFallback);
  CHECK(s.trajectory.inputs.front().a > 0);
  CHECK(s.trajectory.inputs.front().a <= f.config.a_max);
  CHECK(s.trajectory.states.front() == f.problem.current);
  CHECK(static_cast<int>(s.trajectory.inputs.size()) == f.config.horizon);
  CHECK(static_cast<int>(s.trajectory.states.size()) == f.config.horizon + 1);
}

TEST_CASE("solve_dmpc: nothing feasible falls back to max brake") {
  FollowerSetup f = follower(15.0, 0.0);
  f.problem.current.v = 40;  // above v_max; no candidate returns to the box in one step
  Rng rng(3);
  const DmpcSolution s = solve_dmpc(f.problem, PredictedTrajectory{}, f.safety, f.config, rng);
  CHECK(s.status == SolveStatus::InfeasibleFallback);
  for (const auto& u : s.trajectory.inputs) CHECK(u.a == f.config.a_min);
}

TEST_CASE("solve_dmpc: deterministic given seed, inputs inside the box") {
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> acc(-2, 2), vel(5, 25);
  for (int trial = 0; trial < 20; ++trial) {
    FollowerSetup f = follower(vel(gen), acc(gen));
    f.problem.current.py = 0.3 * acc(gen);
    Rng r1(trial), r2(trial);
    const DmpcSolution a = solve_dmpc(f.problem, PredictedTrajectory{}, f.safety, f.config, r1);
    const DmpcSolution b = solve_dmpc(f.problem, PredictedTrajectory{}, f.safety, f.config, r2);
    REQUIRE(a.trajectory.inputs.size() == b.trajectory.inputs.size());
    for (std::size_t k = 0; k < a.trajectory.inputs.size(); ++k) {
      CHECK(a.trajectory.inputs[k] == b.trajectory.inputs[k]);
      const Input& u = a.trajectory.inputs[k];
      CHECK(u.a >= f.config.a_min);
      CHECK(u.a <= f.config.a_max);
      CHECK(u.r >= f.config.r_min);
      CHECK(u.r <= f.config.r_max);
    }
    CHECK(a.cost == b.cost);
  }
}

TEST_CASE("solve_dmpc: chosen candidate is never beaten by the zero input when feasible") {
  FollowerSetup f = follower(15.0, 0.5);
  Rng rng(5);
  const DmpcSolution s = solve_dmpc(f.problem, PredictedTrajectory{}, f.safety, f.config, rng);
  const std::vector<Input> zero(f.config.horizon, Input{});
  const auto zs = rollout(f.problem.current, zero, f.config);
  if (safety_feasible(zs, f.safety, f.config)) CHECK(s.cost <= horizon_cost(zs, zero, f.problem, f.config));
  CHECK(s.candidates_evaluated >= f.config.n_samples);
}

TEST_CASE("platoon config validation") {
  PlatoonConfig c;
  CHECK_NOTHROW(c.validate());
  c.horizon = 1;
  CHECK_THROWS(c.validate());
  c = PlatoonConfig{};
  c.gamma = 0;
  CHECK_THROWS(c.validate());
  c = PlatoonConfig{};
  c.a_min = 3;
  CHECK_THROWS(c.validate());
  c = PlatoonConfig{};
  c.weight_g = -1;
  CHECK_THROWS(c.validate());
}
