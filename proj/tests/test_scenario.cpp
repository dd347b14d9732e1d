#include "dynaroute/scenario.hpp"

#include "doctest.h"

#include <cmath>

using namespace dynaroute;

TEST_CASE("leader profile examples") {
  CHECK(lead_acceleration(4.0) == 0.5);
  CHECK(lead_acceleration(12.0) == 0);
  CHECK(lead_acceleration(17.5) == -1);
  CHECK(lead_acceleration(0.0) == 0);
  CHECK(lead_acceleration(30.0) == 0);
  CHECK_THROWS(lead_acceleration(-0.1));
}

TEST_CASE("leader profile integrates to the listed speed changes") {
  // Exact interval arithmetic: +0.5*2 + 1*1.5 + 0.5*2 by 10 s, then -0.5*2 - 1*1.5 - 1*2.
  const double gain10 = 0.5 * 2.0 + 1.0 * 1.5 + 0.5 * 2.0;
  const double net21 = gain10 - 0.5 * 2.0 - 1.0 * 1.5 - 1.0 * 2.0;
  CHECK(gain10 == doctest::Approx(3.5));
  CHECK(net21 == doctest::Approx(-1.0));

  // Slot-midpoint sampling at dt = 0.1 lands within one dt * |a|max of the exact values.
  const double dt = 0.1;
  double v = 0;
  for (int k = 0; k < 100; ++k) v += lead_acceleration((k + 0.5) * dt) * dt;
  CHECK(std::abs(v - 3.5) <= dt * 1.0 + 1e-9);
  for (int k = 100; k < 210; ++k) v += lead_acceleration((k + 0.5) * dt) * dt;
  CHECK(std::abs(v + 1.0) <= dt * 1.0 + 1e-9);
}

TEST_CASE("default scenario layout") {
  const ScenarioConfig c;
  const World w = build_scenario(c);
  REQUIRE(w.vehicles.size() == 8);
  CHECK(w.rsus.size() == static_cast<std::size_t>(c.rsu.count));
  for (std::size_t i = 1; i < w.vehicles.size(); ++i) {
    const auto& a = w.vehicles[i - 1];
    const auto& b = w.vehicles[i];
    if (a.platoon != b.platoon) continue;
    CHECK(a.state.px - b.state.px - c.safety.l_w == doctest::Approx(10.0));
    CHECK(a.state.py == b.state.py);
    CHECK(b.state.v == c.initial_speed);
  }
  CHECK(w.vehicles[4].lane_y - w.vehicles[0].lane_y == doctest::Approx(c.lane_width));
  // RSU ids follow the vehicle ids.
  CHECK(w.rsus.front().id == 8);
}

TEST_CASE("minimal and invalid layouts") {
  ScenarioConfig c;
  c.n_platoons = 1;
  c.vehicles_per_platoon = 2;
  const World w = build_scenario(c);
  CHECK(w.vehicles.size() == 2);

  c.vehicles_per_platoon = 0;
  CHECK_THROWS_AS(build_scenario(c), ConfigError);
  c = ScenarioConfig{};
  c.n_platoons = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("config text round trip") {
  ScenarioConfig c;
  c.loss_case = LossCase::Case2;
  c.traffic.load = 2.5;
  c.routing.hop_slack = 1;
  c.ga.population = 8;
  const ScenarioConfig back = parse_config(dump_config(c));
  CHECK(back.loss_case == LossCase::Case2);
  CHECK(back.traffic.load == 2.5);
  CHECK(back.routing.hop_slack == 1);
  CHECK(back.ga.population == 8);
  CHECK(dump_config(back) == dump_config(c));
}

TEST_CASE("config parsing: defaults, partial sections, errors") {
  const ScenarioConfig d = parse_config("{}");
  CHECK(d.n_slots() == 300);
  CHECK(d.n_vehicles() == 8);

  const ScenarioConfig p = parse_config(R"({"traffic": {"load": 4}, "loss_case": "case2"})");
  CHECK(p.traffic.load == 4);
  CHECK(p.traffic.rate == ScenarioConfig{}.traffic.rate);
  CHECK(p.loss_case == LossCase::Case2);

  CHECK_THROWS_AS(parse_config(R"({"bogus": 1})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"traffic": {"lod": 1}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"n_platoons": "two"})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"n_platoons": 1.5})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"loss_case": "case3"})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"dt": 0.1, "duration": 30.05})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"ga": {"population": 5}})"), ConfigError);
  CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
  CHECK_THROWS_AS(parse_config("[]"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/dir/config.json"), ConfigError);
}

TEST_CASE("config parsing: channel override accepts null") {
  const ScenarioConfig a = parse_config(R"({"channel": {"varpi_linear_override": 2.0}})");
  REQUIRE(a.channel.varpi_linear_override.has_value());
  CHECK(*a.channel.varpi_linear_override == 2.0);
  const ScenarioConfig b = parse_config(R"({"channel": {"varpi_linear_override": null}})");
  CHECK_FALSE(b.channel.varpi_linear_override.has_value());
}
