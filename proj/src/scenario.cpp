#include "dynaroute/scenario.hpp"

#include "json.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace dynaroute {

using nlohmann::json;
using nlohmann::ordered_json;

ScenarioConfig::ScenarioConfig() {
  channel.varpi_from_link_budget = true;
  platoon.dt = dt;
  platoon.desired_gap = desired_gap;
  set_double_integrator(platoon);
  platoon.horizon = 20;
  platoon.weight_r = 0.3;
  ga.population = 16;
  ga.generations = 12;
}

int ScenarioConfig::n_slots() const { return static_cast<int>(std::lround(duration / dt)); }

void ScenarioConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(n_platoons >= 1, "n_platoons must be >= 1");
  require(vehicles_per_platoon >= 1, "vehicles_per_platoon must be >= 1");
  require(dt > 0, "dt must be positive");
  require(duration >= 0, "duration must be >= 0");
  require(std::abs(duration / dt - std::round(duration / dt)) < 1e-6, "duration must be a whole number of slots");
  require(desired_gap > 0, "desired_gap must be positive");
  require(comm_range > 0, "comm_range must be positive");
  require(n_channels >= 1, "n_channels must be >= 1");
  require(err_v_bound > 0 && err_p_bound > 0, "error bounds must be positive");
  require(lane_width > 0, "lane_width must be positive");
  require(n_platoons == 1 || lane_width >= safety.d_min, "lane_width must be >= safety.d_min with several platoons");
  require(std::abs(platoon.dt - dt) < 1e-12, "platoon.dt must equal dt");
  require(initial_speed >= platoon.v_min && initial_speed <= platoon.v_max, "initial_speed outside [v_min, v_max]");
  require(loss.case1_drop >= 0 && loss.case1_drop <= 1, "loss.case1_drop must lie in [0,1]");
  require(loss.case2_p_good_to_bad >= 0 && loss.case2_p_good_to_bad <= 1 && loss.case2_p_bad_to_good >= 0 &&
              loss.case2_p_bad_to_good <= 1,
          "loss transition probabilities must lie in [0,1]");
  require(loss.case2_contender_factor >= 1, "loss.case2_contender_factor must be >= 1");
  require(traffic.rate >= 0 && traffic.load >= 0, "traffic rate and load must be >= 0");
  require(traffic.interval > 0, "traffic.interval must be positive");
  require(traffic.size_min > 0 && traffic.size_min <= traffic.size_max, "traffic sizes must satisfy 0 < min <= max");
  require(traffic.deadline_slots >= 1, "traffic.deadline_slots must be >= 1");
  require(routing.max_hops >= 1 && routing.path_cap >= 1, "routing.max_hops and path_cap must be >= 1");
  require(routing.hop_slack >= 0, "routing.hop_slack must be >= 0");
  require(routing.schedule_horizon >= 1 && routing.reoptimize_every >= 1,
          "routing.schedule_horizon and reoptimize_every must be >= 1");
  require(routing.beacon_bits > 0, "routing.beacon_bits must be positive");
  require(rsu.count >= 1 && rsu.spacing > 0, "rsu.count must be >= 1 and spacing positive");
  try {
    channel.validate();
    safety.validate();
    platoon.validate();
    metric_weights.validate();
    ga.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

namespace {

class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + "must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) throw ConfigError("");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw ConfigError("");
      }
      out = it->get<T>();
    } catch (const std::exception&) {
      throw ConfigError(where() + key + ": wrong type");
    }
  }

  template <class E>
  void get_enum(const char* key, E& out, const std::map<std::string, E>& names) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    if (!it->is_string()) throw ConfigError(where() + key + ": expected a string");
    auto found = names.find(it->get<std::string>());
    if (found == names.end()) throw ConfigError(where() + key + ": unknown value '" + it->get<std::string>() + "'");
    out = found->second;
  }

  void get_optional(const char* key, std::optional<double>& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    if (it->is_null()) {
      out.reset();
    } else if (it->is_number()) {
      out = it->get<double>();
    } else {
      throw ConfigError(where() + key + ": expected a number or null");
    }
  }

  std::optional<Section> sub(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return std::nullopt;
    return Section(*it, path_ + key + ".");
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.contains(it.key())) throw ConfigError("unknown key '" + path_ + it.key() + "'");
  }

 private:
  std::string where() const { return path_.empty() ? "" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

const std::map<std::string, LossCase> loss_names{{"case1", LossCase::Case1}, {"case2", LossCase::Case2}};
const std::map<std::string, TrafficModel> traffic_names{{"poisson", TrafficModel::Poisson},
                                                        {"periodic", TrafficModel::Periodic}};
const std::map<std::string, LeaderProfile> leader_names{{"standard", LeaderProfile::Standard},
                                                        {"constant", LeaderProfile::Constant}};

template <class E>
std::string name_of(E value, const std::map<std::string, E>& names) {
  for (const auto& [k, v] : names)
    if (v == value) return k;
  return "";
}

}  // namespace

ScenarioConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  ScenarioConfig c;
  Section s(root, "");
  s.get("n_platoons", c.n_platoons);
  s.get("vehicles_per_platoon", c.vehicles_per_platoon);
  s.get("desired_gap", c.desired_gap);
  s.get("dt", c.dt);
  s.get("duration", c.duration);
  s.get("initial_speed", c.initial_speed);
  s.get("lane_width", c.lane_width);
  s.get("platoon_stagger", c.platoon_stagger);
  s.get("comm_range", c.comm_range);
  s.get("n_channels", c.n_channels);
  s.get("err_v_bound", c.err_v_bound);
  s.get("err_p_bound", c.err_p_bound);
  s.get("epsilon", c.epsilon);
  s.get_enum("loss_case", c.loss_case, loss_names);
  s.get_enum("leader_profile", c.leader_profile, leader_names);

  if (auto ch = s.sub("channel")) {
    auto& p = c.channel;
    ch->get("fc", p.fc);
    ch->get("c", p.c);
    ch->get("eta_los", p.eta_los);
    ch->get("p_tx", p.p_tx);
    ch->get("n_noise", p.n_noise);
    ch->get("bandwidth", p.bandwidth);
    ch->get("tau_slot", p.tau_slot);
    ch->get("varpi", p.varpi);
    ch->get_optional("varpi_linear_override", p.varpi_linear_override);
    ch->get("varpi_from_link_budget", p.varpi_from_link_budget);
    ch->get("xi0", p.xi0);
    ch->get("l0", p.l0);
    ch->get("l_v2i_0", p.l_v2i_0);
    ch->finish();
  }
  if (auto sf = s.sub("safety")) {
    auto& p = c.safety;
    sf->get("W", p.W);
    sf->get("l_w", p.l_w);
    sf->get("tau1", p.tau1);
    sf->get("tau2", p.tau2);
    sf->get("tau3", p.tau3);
    sf->get("a_max", p.a_max);
    sf->get("d_min", p.d_min);
    sf->get("alpha", p.alpha);
    sf->finish();
  }
  if (auto pc = s.sub("platoon")) {
    auto& p = c.platoon;
    pc->get("horizon", p.horizon);
    pc->get("weight_r", p.weight_r);
    pc->get("weight_f", p.weight_f);
    pc->get("weight_g", p.weight_g);
    pc->get("gamma", p.gamma);
    pc->get("v_min", p.v_min);
    pc->get("v_max", p.v_max);
    pc->get("psi_min", p.psi_min);
    pc->get("psi_max", p.psi_max);
    pc->get("r_min", p.r_min);
    pc->get("r_max", p.r_max);
    pc->get("a_min", p.a_min);
    pc->get("a_max", p.a_max);
    pc->get("n_samples", p.n_samples);
    pc->get("max_iterations", p.max_iterations);
    pc->get("sample_sigma_a", p.sample_sigma_a);
    pc->get("sample_sigma_r", p.sample_sigma_r);
    pc->get("cone_time_horizon", p.cone_time_horizon);
    pc->get("seed_gain_gap", p.seed_gain_gap);
    pc->get("seed_gain_speed", p.seed_gain_speed);
    pc->get("seed_gain_heading", p.seed_gain_heading);
    pc->get("seed_gain_lateral", p.seed_gain_lateral);
    pc->finish();
  }
  if (auto mw = s.sub("metric_weights")) {
    mw->get("kappa1", c.metric_weights.kappa1);
    mw->get("kappa2", c.metric_weights.kappa2);
    mw->get("kappa3", c.metric_weights.kappa3);
    mw->finish();
  }
  if (auto ga = s.sub("ga")) {
    auto& p = c.ga;
    ga->get("population", p.population);
    ga->get("generations", p.generations);
    ga->get("crossover_rate", p.crossover_rate);
    ga->get("mutation_rate", p.mutation_rate);
    ga->get("tournament_size", p.tournament_size);
    ga->get("rng_seed", p.rng_seed);
    ga->get("divisions", p.divisions);
    ga->get("additive_crowding", p.additive_crowding);
    ga->get("mutation_sigma", p.mutation_sigma);
    ga->get("threads", p.threads);
    ga->finish();
  }
  if (auto ls = s.sub("loss")) {
    ls->get("case1_drop", c.loss.case1_drop);
    ls->get("case2_p_good_to_bad", c.loss.case2_p_good_to_bad);
    ls->get("case2_p_bad_to_good", c.loss.case2_p_bad_to_good);
    ls->get("case2_contender_factor", c.loss.case2_contender_factor);
    ls->finish();
  }
  if (auto tr = s.sub("traffic")) {
    auto& p = c.traffic;
    tr->get_enum("model", p.model, traffic_names);
    tr->get("rate", p.rate);
    tr->get("load", p.load);
    tr->get("interval", p.interval);
    tr->get("size_min", p.size_min);
    tr->get("size_max", p.size_max);
    tr->get("deadline_slots", p.deadline_slots);
    tr->get("demand_bits", p.demand_bits);
    tr->finish();
  }
  if (auto rt = s.sub("routing")) {
    auto& p = c.routing;
    rt->get("max_hops", p.max_hops);
    rt->get("path_cap", p.path_cap);
    rt->get("hop_slack", p.hop_slack);
    rt->get("schedule_horizon", p.schedule_horizon);
    rt->get("reoptimize_every", p.reoptimize_every);
    rt->get("beacon_bits", p.beacon_bits);
    rt->finish();
  }
  if (auto rs = s.sub("rsu")) {
    rs->get("first", c.rsu.first);
    rs->get("spacing", c.rsu.spacing);
    rs->get("count", c.rsu.count);
    rs->get("lateral", c.rsu.lateral);
    rs->finish();
  }
  s.finish();

  c.platoon.dt = c.dt;
  c.platoon.desired_gap = c.desired_gap;
  set_double_integrator(c.platoon);
  c.validate();
  return c;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string dump_config(const ScenarioConfig& c) {
  ordered_json j;
  j["n_platoons"] = c.n_platoons;
  j["vehicles_per_platoon"] = c.vehicles_per_platoon;
  j["desired_gap"] = c.desired_gap;
  j["dt"] = c.dt;
  j["duration"] = c.duration;
  j["initial_speed"] = c.initial_speed;
  j["lane_width"] = c.lane_width;
  j["platoon_stagger"] = c.platoon_stagger;
  j["comm_range"] = c.comm_range;
  j["n_channels"] = c.n_channels;
  j["err_v_bound"] = c.err_v_bound;
  j["err_p_bound"] = c.err_p_bound;
  j["epsilon"] = c.epsilon;
  j["loss_case"] = name_of(c.loss_case, loss_names);
  j["leader_profile"] = name_of(c.leader_profile, leader_names);
  const auto& ch = c.channel;
  j["channel"] = {{"fc", ch.fc},
                  {"c", ch.c},
                  {"eta_los", ch.eta_los},
                  {"p_tx", ch.p_tx},
                  {"n_noise", ch.n_noise},
                  {"bandwidth", ch.bandwidth},
                  {"tau_slot", ch.tau_slot},
                  {"varpi", ch.varpi},
                  {"varpi_linear_override",
                   ch.varpi_linear_override ? ordered_json(*ch.varpi_linear_override) : ordered_json(nullptr)},
                  {"varpi_from_link_budget", ch.varpi_from_link_budget},
                  {"xi0", ch.xi0},
                  {"l0", ch.l0},
                  {"l_v2i_0", ch.l_v2i_0}};
  const auto& sf = c.safety;
  j["safety"] = {{"W", sf.W},         {"l_w", sf.l_w},     {"tau1", sf.tau1},   {"tau2", sf.tau2},
                 {"tau3", sf.tau3},   {"a_max", sf.a_max}, {"d_min", sf.d_min}, {"alpha", sf.alpha}};
  const auto& p = c.platoon;
  j["platoon"] = {{"horizon", p.horizon},
                  {"weight_r", p.weight_r},
                  {"weight_f", p.weight_f},
                  {"weight_g", p.weight_g},
                  {"gamma", p.gamma},
                  {"v_min", p.v_min},
                  {"v_max", p.v_max},
                  {"psi_min", p.psi_min},
                  {"psi_max", p.psi_max},
                  {"r_min", p.r_min},
                  {"r_max", p.r_max},
                  {"a_min", p.a_min},
                  {"a_max", p.a_max},
                  {"n_samples", p.n_samples},
                  {"max_iterations", p.max_iterations},
                  {"sample_sigma_a", p.sample_sigma_a},
                  {"sample_sigma_r", p.sample_sigma_r},
                  {"cone_time_horizon", p.cone_time_horizon},
                  {"seed_gain_gap", p.seed_gain_gap},
                  {"seed_gain_speed", p.seed_gain_speed},
                  {"seed_gain_heading", p.seed_gain_heading},
                  {"seed_gain_lateral", p.seed_gain_lateral}};
  j["metric_weights"] = {{"kappa1", c.metric_weights.kappa1},
                         {"kappa2", c.metric_weights.kappa2},
                         {"kappa3", c.metric_weights.kappa3}};
  const auto& g = c.ga;
  j["ga"] = {{"population", g.population},       {"generations", g.generations},
             {"crossover_rate", g.crossover_rate}, {"mutation_rate", g.mutation_rate},
             {"tournament_size", g.tournament_size}, {"rng_seed", g.rng_seed},
             {"divisions", g.divisions},           {"additive_crowding", g.additive_crowding},
             {"mutation_sigma", g.mutation_sigma}, {"threads", g.threads}};
  j["loss"] = {{"case1_drop", c.loss.case1_drop},
               {"case2_p_good_to_bad", c.loss.case2_p_good_to_bad},
               {"case2_p_bad_to_good", c.loss.case2_p_bad_to_good},
               {"case2_contender_factor", c.loss.case2_contender_factor}};
  const auto& t = c.traffic;
  j["traffic"] = {{"model", name_of(t.model, traffic_names)},
                  {"rate", t.rate},
                  {"load", t.load},
                  {"interval", t.interval},
                  {"size_min", t.size_min},
                  {"size_max", t.size_max},
                  {"deadline_slots", t.deadline_slots},
                  {"demand_bits", t.demand_bits}};
  const auto& r = c.routing;
  j["routing"] = {{"max_hops", r.max_hops},
                  {"path_cap", r.path_cap},
                  {"hop_slack", r.hop_slack},
                  {"schedule_horizon", r.schedule_horizon},
                  {"reoptimize_every", r.reoptimize_every},
                  {"beacon_bits", r.beacon_bits}};
  j["rsu"] = {{"first", c.rsu.first}, {"spacing", c.rsu.spacing}, {"count", c.rsu.count}, {"lateral", c.rsu.lateral}};
  return j.dump(2) + "\n";
}

double lead_acceleration(double t) {
  if (t < 0) throw std::invalid_argument("lead_acceleration: t must be >= 0");
  struct Phase {
    double from, to, a;
  };
  static constexpr Phase phases[] = {{3.5, 5.5, 0.5},    {6.0, 7.5, 1.0},   {8.0, 10.0, 0.5},
                                     {14.5, 16.5, -0.5}, {17.0, 18.5, -1.0}, {19.0, 21.0, -1.0}};
  for (const auto& p : phases)
    if (t >= p.from && t <= p.to) return p.a;
  return 0.0;
}

World build_scenario(const ScenarioConfig& config) {
  config.validate();
  World w;
  const double spacing = config.desired_gap + config.safety.l_w;
  int id = 0;
  for (int p = 0; p < config.n_platoons; ++p) {
    const double lane_y = p * config.lane_width;
    const double head = -p * config.platoon_stagger;
    for (int i = 0; i < config.vehicles_per_platoon; ++i) {
      VehicleAgent a;
      a.id = id++;
      a.platoon = p;
      a.index = i;
      a.lane_y = lane_y;
      a.state = State{head - i * spacing, lane_y, 0.0, config.initial_speed};
      w.vehicles.push_back(a);
    }
  }
  for (int r = 0; r < config.rsu.count; ++r)
    w.rsus.push_back(Rsu{id++, Vec2d(config.rsu.first + r * config.rsu.spacing, config.rsu.lateral)});
  return w;
}

}  // namespace dynaroute
