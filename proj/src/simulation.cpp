#include "dynaroute/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace dynaroute {

Mode parse_mode(const std::string& name) {
  if (name == "dynaroute") return Mode::DynaRoute;
  if (name == "baseline") return Mode::Baseline;
  throw std::invalid_argument("unknown mode '" + name + "' (expected dynaroute or baseline)");
}

std::string mode_name(Mode mode) { return mode == Mode::DynaRoute ? "dynaroute" : "baseline"; }

TopologySnapshot build_topology(const World& world, const std::vector<NodeStatus>& status,
                                const ScenarioConfig& config, double nominal_bits, int contenders) {
  TopologySnapshot topo;
  for (const auto& v : world.vehicles)
    topo.nodes.push_back(TopoNode{v.id, v.state.position(), v.state.v, false, status.at(v.id)});
  for (const auto& r : world.rsus) topo.nodes.push_back(TopoNode{r.id, r.position, 0.0, true, NodeStatus{}});

  auto add = [&](const TopoNode& a, const TopoNode& b, double offset) {
    const double planar = (a.position - b.position).norm();
    if (planar > config.comm_range) return;
    TopoLink link;
    link.from = a.id;
    link.to = b.id;
    link.planar = planar;
    link.snapshot = make_link_snapshot(planar, offset, nominal_bits, contenders, config.channel);
    link.staying_time = staying_time(config.comm_range, planar, a.speed, b.speed);
    topo.links.push_back(link);
  };
  for (const auto& a : topo.nodes) {
    if (a.is_rsu) continue;
    for (const auto& b : topo.nodes) {
      if (a.id == b.id) continue;
      add(a, b, b.is_rsu ? config.channel.l_v2i_0 : config.channel.l0);
    }
  }
  topo.index();
  return topo;
}

void add_candidates(TopologySnapshot& topology, int source, int destination, const ScenarioConfig& config) {
  const std::pair key{source, destination};
  if (topology.candidates.contains(key)) return;
  auto paths = enumerate_paths(topology, source, destination, config.routing.max_hops, config.metric_weights);
  if (!paths.empty()) {
    int fewest = paths.front().hop_count();
    for (const auto& p : paths) fewest = std::min(fewest, p.hop_count());
    std::erase_if(paths, [&](const PathCandidate& p) { return p.hop_count() > fewest + config.routing.hop_slack; });
  }
  topology.candidates[key] = best_paths(std::move(paths), config.routing.path_cap);
}

std::optional<PathCandidate> baseline_route(const TopologySnapshot& topology, const Packet& packet, int max_hops,
                                            const MetricWeights& weights) {
  if (packet.source == packet.destination) throw std::invalid_argument("baseline_route: source equals destination");
  const Vec2d dest = topology.node(packet.destination).position;
  std::vector<int> hops{packet.source};
  while (static_cast<int>(hops.size()) - 1 < max_hops) {
    const int at = hops.back();
    if (topology.link_index(at, packet.destination)) {
      hops.push_back(packet.destination);
      return score_path(topology, hops, weights);
    }
    const double here = (topology.node(at).position - dest).norm();
    std::optional<int> best;
    double best_d = here;
    for (int nb : topology.neighbors(at)) {
      const TopoNode& n = topology.node(nb);
      if (n.is_rsu || vehicle_status(n.status.queue_len, n.status.queue_max) != 1) continue;
      if (std::find(hops.begin(), hops.end(), nb) != hops.end()) continue;
      const double d = (n.position - dest).norm();
      if (d < best_d) {
        best_d = d;
        best = nb;
      }
    }
    if (!best) return std::nullopt;
    hops.push_back(*best);
  }
  return std::nullopt;
}

JointProblem::JointProblem(std::vector<FollowerTask> followers, std::vector<Packet> packets,
                           const TopologySnapshot& topology, const ScenarioConfig& config)
    : followers_(std::move(followers)), packets_(std::move(packets)), topology_(topology), config_(config) {
  shape_.n_vehicles = static_cast<int>(followers_.size());
  shape_.horizon = config.platoon.horizon;
  for (const auto& p : packets_)
    shape_.path_counts.push_back(static_cast<int>(topology.paths(p.source, p.destination).size()));
  shape_.lower = Input{config.platoon.r_min, config.platoon.a_min};
  shape_.upper = Input{config.platoon.r_max, config.platoon.a_max};
}

ScheduleDecision JointProblem::decode(const std::vector<int>& routing) const {
  return place_routes(packets_, routing, topology_, config_.n_channels, config_.routing.schedule_horizon);
}

Evaluation JointProblem::evaluate(const Genome& genome) const {
  Evaluation e;
  const ScheduleDecision decision = decode(genome.routing);
  e.objective_y = schedule_objective(decision, packets_, topology_);
  e.feasible = true;
  for (std::size_t f = 0; f < followers_.size(); ++f) {
    const auto& task = followers_[f];
    const auto& inputs = genome.control[f];
    const auto states = rollout(task.problem.current, inputs, config_.platoon);
    e.objective_j += horizon_cost(states, inputs, task.problem, config_.platoon);
    e.feasible = e.feasible && safety_feasible(states, task.safety, config_.platoon);
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      const State& ref = task.problem.reference[k + 1];
      e.indicators(0) += inputs[k].vec().norm();
      e.indicators(1) += std::abs(states[k + 1].v - ref.v);
      e.indicators(2) += (states[k + 1].position() - ref.position()).norm();
    }
  }
  return e;
}

std::vector<Genome> JointProblem::seed_genomes() const {
  Genome g;
  for (const auto& task : followers_) g.control.push_back(task.seed);
  const ScheduleDecision greedy =
      solve_schedule_greedy(packets_, topology_, config_.n_channels, config_.routing.schedule_horizon);
  g.routing.assign(packets_.size(), -1);
  for (std::size_t p = 0; p < packets_.size(); ++p)
    if (shape_.path_counts[p] > 0) g.routing[p] = 0;
  for (const auto& r : greedy.routes) g.routing[r.packet] = r.path;
  return {g};
}

namespace {

struct KnownPlan {
  PredictedTrajectory plan;
  int plan_slot = 0;
};

struct Flow {
  int record = 0;  // index into log.packets
  int id = 0;
  int destination = 0;
  int holder = 0;
  double size = 0;
  int arrival = 0;
  int last_slot = 0;
  std::vector<int> route;  // remaining nodes starting at the holder
  int next_slot = -1;      // slot of the next committed hop
  bool done = false;
};

class Simulator {
 public:
  Simulator(const ScenarioConfig& config, std::uint64_t seed, Mode mode)
      : cfg_(config), seed_(seed), mode_(mode), world_(build_scenario(config)) {
    const int n = cfg_.n_vehicles();
    const int nodes = n + static_cast<int>(world_.rsus.size());
    const int t = cfg_.platoon.horizon;
    plans_.resize(n);
    plan_slots_.assign(n, 0);
    known_.assign(n, std::vector<KnownPlan>(n));
    delivered_.assign(n, std::vector<int>(n, 0));
    inputs_.assign(n, Input{});
    held_.assign(n, false);
    ustar_.assign(n, Eigen::Vector4d::Zero());
    xstar_.assign(n, Eigen::Vector4d::Zero());
    status_.assign(nodes, NodeStatus{});
    for (int i = 0; i < n; ++i) {
      const State& s = world_.vehicles[i].state;
      plans_[i].inputs.assign(t, Input{});
      plans_[i].states = rollout(s, plans_[i].inputs, cfg_.platoon);
      plans_[i].reference = plans_[i].states;
      xstar_[i] = s.vec();
    }
    cold_.assign(n, true);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) known_[i][j] = KnownPlan{plans_[j], 0};

    const bool ge = cfg_.loss_case == LossCase::Case2;
    auto make_loss = [&](std::uint64_t stream, int a, int b) {
      const auto s = derive_seed(seed_, stream + a, b);
      return ge ? LossProcess(LossKind::GilbertElliott, cfg_.loss.case2_p_good_to_bad, cfg_.loss.case2_p_bad_to_good,
                              0.0, s)
                : LossProcess(LossKind::Bernoulli, 0.0, 1.0, cfg_.loss.case1_drop, s);
    };
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j) beacon_loss_.emplace(std::pair{i, j}, make_loss(9000, i, j));
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < nodes; ++b)
        if (a != b) data_loss_.emplace(std::pair{a, b}, make_loss(7000, a, b));
    contender_factor_ = ge ? cfg_.loss.case2_contender_factor : 1;
    for (int i = 0; i < n; ++i) traffic_rng_.emplace_back(derive_seed(seed_, 5000 + i));
    phase_.resize(n);
    for (int i = 0; i < n; ++i) phase_[i] = uniform01(traffic_rng_[i]) * cfg_.traffic.interval;
    mac_rng_.seed(derive_seed(seed_, 6000));
    log_.dt = cfg_.dt;
  }

  MetricsLog run() {
    const int slots = cfg_.n_slots();
    for (int k = 0; k < slots; ++k) {
      SlotRecord rec;
      rec.slot = k;
      rec.t = k * cfg_.dt;
      generate_traffic(k);
      exchange_beacons();
      control(k);
      topology_ = build_topology(world_, status_, cfg_, nominal_bits(), transport_contenders());
      if (mode_ == Mode::DynaRoute)
        transmit_scheduled(k, rec);
      else
        transmit_baseline(k, rec);
      expire(k);
      record_vehicles(rec);
      log_.slots.push_back(std::move(rec));
      if (collided()) {
        log_.collision = true;
        log_.collision_slot = k;
        break;
      }
      advance();
      for (auto& [key, loss] : beacon_loss_) markov_step(loss);
      for (auto& [key, loss] : data_loss_) markov_step(loss);
    }
    if (!log_.collision && collided()) {
      log_.collision = true;
      log_.collision_slot = slots;
    }
    for (const auto& f : flows_)
      if (!f.done) log_.packets[f.record].outcome = "pending";
    return std::move(log_);
  }

 private:
  int n_vehicles() const { return cfg_.n_vehicles(); }
  double nominal_bits() const { return 0.5 * (cfg_.traffic.size_min + cfg_.traffic.size_max); }
  int transport_contenders() const { return contender_factor_; }
  const VehicleAgent& vehicle(int i) const { return world_.vehicles[i]; }
  int leader_of(int i) const { return i - vehicle(i).index; }
  double spacing() const { return cfg_.desired_gap + cfg_.safety.l_w; }

  int nearest_rsu(const Vec2d& p) const {
    int best = world_.rsus.front().id;
    double best_d = std::numeric_limits<double>::max();
    for (const auto& r : world_.rsus) {
      const double d = (r.position - p).norm();
      if (d < best_d) {
        best_d = d;
        best = r.id;
      }
    }
    return best;
  }

  void generate_traffic(int slot) {
    const auto& tr = cfg_.traffic;
    for (int i = 0; i < n_vehicles(); ++i) {
      auto& rng = traffic_rng_[i];
      int count = 0;
      if (tr.model == TrafficModel::Poisson) {
        const double lambda = tr.rate * tr.load * cfg_.dt;
        if (lambda > 0) count = std::poisson_distribution<int>(lambda)(rng);
      } else {
        const double t0 = slot * cfg_.dt;
        const double t1 = t0 + cfg_.dt;
        const double first = std::ceil((t0 - phase_[i]) / tr.interval - 1e-9);
        for (double m = std::max(0.0, first); phase_[i] + m * tr.interval < t1 - 1e-9; m += 1) ++count;
      }
      for (int c = 0; c < count; ++c) {
        const double size = std::uniform_real_distribution<double>(tr.size_min, tr.size_max)(rng);
        Flow f;
        f.record = static_cast<int>(log_.packets.size());
        f.id = next_packet_id_++;
        f.destination = nearest_rsu(vehicle(i).state.position());
        f.holder = i;
        f.size = size;
        f.arrival = slot;
        f.last_slot = slot + tr.deadline_slots;
        PacketRecord pr;
        pr.id = f.id;
        pr.source = i;
        pr.destination = f.destination;
        pr.arrival_slot = slot;
        pr.size = size;
        pr.outcome = "pending";
        log_.packets.push_back(pr);
        flows_.push_back(std::move(f));
      }
    }
    refresh_queues();
  }

  void refresh_queues() {
    for (auto& s : status_) s.queue_len = 0;
    for (const auto& f : flows_)
      if (!f.done) ++status_[f.holder].queue_len;
  }

  // Each vehicle broadcasts its current plan; receivers within range keep the
  // latest copy that got through.
  void exchange_beacons() {
    for (int i = 0; i < n_vehicles(); ++i)
      for (int j = 0; j < n_vehicles(); ++j) {
        if (i == j) continue;
        delivered_[i][j] = 0;
        const double planar = (vehicle(i).state.position() - vehicle(j).state.position()).norm();
        auto& loss = beacon_loss_.at({i, j});
        if (planar > cfg_.comm_range) continue;
        const double prob = std::min(
            1.0, slot_success_prob(cfg_.routing.beacon_bits, contender_factor_, cfg_.channel,
                                   std::sqrt(planar * planar + cfg_.channel.l0 * cfg_.channel.l0)));
        if (sample_delivery(prob, loss) == 1) {
          delivered_[i][j] = 1;
          known_[i][j] = KnownPlan{plans_[j], plan_slots_[j]};
        }
      }
  }

  std::vector<State> aligned(int i, int j, int slot) const {
    const auto& kp = known_[i][j];
    return align_plan(kp.plan, kp.plan_slot, slot, cfg_.platoon.horizon, cfg_.dt);
  }

  // Accelerations of j's last received plan over the horizon, zero past its end.
  std::vector<double> planned_accel(int i, int j, int slot) const {
    const auto& kp = known_[i][j];
    const int shift = std::max(0, slot - kp.plan_slot);
    std::vector<double> out(cfg_.platoon.horizon, 0.0);
    for (int k = 0; k < cfg_.platoon.horizon; ++k)
      if (shift + k < static_cast<int>(kp.plan.inputs.size())) out[k] = kp.plan.inputs[shift + k].a;
    return out;
  }

  Input lane_keeping(const State& s, double lane_y) const {
    const auto& p = cfg_.platoon;
    Input u;
    u.r = std::clamp(-p.seed_gain_heading * wrap_angle(s.psi) + p.seed_gain_lateral * (lane_y - s.py), p.r_min,
                     p.r_max);
    return u;
  }

  double leader_accel(double t) const {
    return cfg_.leader_profile == LeaderProfile::Standard ? lead_acceleration(t) : 0.0;
  }

  void control(int slot) {
    const int t = cfg_.platoon.horizon;
    const double now = slot * cfg_.dt;
    std::vector<FollowerTask> tasks;

    for (int i = 0; i < n_vehicles(); ++i) {
      const auto& me = vehicle(i);
      held_[i] = false;
      if (me.index == 0) {
        std::vector<Input> seq;
        State s = me.state;
        for (int k = 0; k < t; ++k) {
          Input u = lane_keeping(s, me.lane_y);
          u.a = leader_accel(now + (k + 0.5) * cfg_.dt);
          seq.push_back(u);
          s = step(s, u, cfg_.dt);
        }
        plans_[i].inputs = seq;
        plans_[i].states = rollout(me.state, seq, cfg_.platoon);
        plans_[i].reference = plans_[i].states;
        plan_slots_[i] = slot;
        inputs_[i] = seq.front();
        continue;
      }

      const int pred = i - 1;
      const int lead = leader_of(i);
      const Vec2d pred_offset(spacing(), 0.0);
      const Vec2d lead_offset(spacing() * me.index, 0.0);

      std::vector<ConsensusSample> samples;
      samples.push_back({aligned(i, pred, slot).front(), pred_offset, delivered_[i][pred]});
      if (lead != pred) samples.push_back({aligned(i, lead, slot).front(), lead_offset, delivered_[i][lead]});
      const FallbackResult fb = loss_fallback_update(ustar_[i], xstar_[i], me.state, inputs_[i], samples, cfg_.platoon);
      ustar_[i] = fb.u_star;
      xstar_[i] = fb.x_star;
      if (fb.held) {
        // No neighbour update arrived: keep executing the last plan.
        held_[i] = true;
        const auto& own = plans_[i].inputs;
        const int step_in = std::min<int>(slot - plan_slots_[i], static_cast<int>(own.size()) - 1);
        inputs_[i] = own[step_in];
        continue;
      }

      const auto lead_states = aligned(i, lead, slot);
      const auto lead_accel = planned_accel(i, lead, slot);
      auto pred_states = aligned(i, pred, slot);
      auto pred_accel = planned_accel(i, pred, slot);
      // Past the end of a stale predecessor plan, assume it keeps following the leader.
      const auto& pk = known_[i][pred];
      const int known_steps = static_cast<int>(pk.plan.inputs.size()) - std::max(0, slot - pk.plan_slot);
      for (int k = std::max(0, known_steps); k < t; ++k) {
        pred_accel[k] = lead_accel[k];
        pred_states[k + 1] = step(pred_states[k], Input{0.0, lead_accel[k]}, cfg_.dt);
      }
      DmpcProblem prob;
      prob.current = me.state;
      for (int k = 0; k <= t; ++k) {
        const State& l = lead_states[k];
        prob.reference.push_back(State{l.px - lead_offset.x(), me.lane_y, 0.0, l.v});
        prob.neighbors.push_back({NeighborState{pred_states[k], pred_offset}});
      }
      prob.predecessor_accel = pred_accel;
      prob.consensus_seed = consensus_input(fb.u_star, cfg_.platoon);

      SafetyContext safety;
      safety.params = cfg_.safety;
      safety.mode = ManeuverMode::Following;
      safety.predecessor = pred_states;
      for (int j = 0; j < n_vehicles(); ++j) {
        if (vehicle(j).platoon == me.platoon) continue;
        if (std::abs(vehicle(j).state.px - me.state.px) > 3 * spacing()) continue;
        safety.others.push_back(aligned(i, j, slot));
      }

      Rng rng(derive_seed(seed_, 3000 + i, slot));
      const PredictedTrajectory prev = cold_[i] ? PredictedTrajectory{} : plans_[i];
      DmpcSolution sol = solve_dmpc(prob, prev, safety, cfg_.platoon, rng);
      cold_[i] = false;
      plans_[i] = sol.trajectory;
      plan_slots_[i] = slot;
      inputs_[i] = plans_[i].inputs.front();
      tasks.push_back(FollowerTask{i, std::move(prob), std::move(safety), plans_[i].inputs});
    }

    pending_tasks_ = std::move(tasks);
  }

  std::vector<Packet> pending_packets(int slot, std::vector<int>* index) const {
    std::vector<Packet> out;
    for (int f = 0; f < static_cast<int>(flows_.size()); ++f) {
      const Flow& fl = flows_[f];
      if (fl.done) continue;
      if (index && !fl.route.empty()) continue;
      Packet p;
      p.id = fl.id;
      p.arrival_slot = 0;
      p.deadline_slots = std::max(0, fl.last_slot - slot);
      p.size = fl.size;
      p.source = fl.holder;
      p.destination = fl.destination;
      out.push_back(p);
      if (index) index->push_back(f);
    }
    return out;
  }

  void commit(Flow& f, const PathCandidate& path, int start) {
    f.route = path.hops;
    f.next_slot = start;
  }

  // Y depends only on the routing genes and J only on the control genes, so
  // the best-Y routing joined with the best-J control may beat every member.
  static Individual pick(const JointProblem& problem, const std::vector<Individual>& members) {
    Individual best = scalarize_select(members);
    const Individual* top_y = nullptr;
    const Individual* low_j = nullptr;
    for (const auto& m : members) {
      if (!top_y || m.objective_y > top_y->objective_y) top_y = &m;
      if (m.feasible && (!low_j || m.objective_j < low_j->objective_j)) low_j = &m;
    }
    if (!top_y || !low_j) return best;
    Individual joined;
    joined.genome = Genome{low_j->genome.control, top_y->genome.routing};
    const Evaluation e = evaluate(joined.genome, problem);
    joined.objective_y = e.objective_y;
    joined.objective_j = e.objective_j;
    joined.feasible = e.feasible;
    joined.indicators = e.indicators;
    return scalar_better(joined, best) ? joined : best;
  }

  void transmit_scheduled(int slot, SlotRecord& rec) {
    const int horizon = cfg_.routing.schedule_horizon;
    for (const auto& f : flows_)
      if (!f.done) add_candidates(topology_, f.holder, f.destination, cfg_);

    if (slot % cfg_.routing.reoptimize_every == 0) {
      std::vector<int> index;
      for (int f = 0; f < static_cast<int>(flows_.size()); ++f)
        if (!flows_[f].done) index.push_back(f);
      std::vector<Packet> packets;
      for (int f : index) {
        const Flow& fl = flows_[f];
        packets.push_back(Packet{fl.id, 0, std::max(0, fl.last_slot - slot), fl.size, fl.holder, fl.destination});
      }
      JointProblem problem(pending_tasks_, packets, topology_, cfg_);
      GaParams ga = cfg_.ga;
      ga.rng_seed = derive_seed(seed_, 11, slot);
      const ParetoFront front = evolve(problem, ga);
      const Individual best = pick(problem, front.members);
      if (best.feasible) {
        for (std::size_t t = 0; t < pending_tasks_.size(); ++t) {
          const auto& task = pending_tasks_[t];
          auto& plan = plans_[task.vehicle];
          plan.inputs = best.genome.control[t];
          plan.states = rollout(task.problem.current, plan.inputs, cfg_.platoon);
          plan.reference = task.problem.reference;
          inputs_[task.vehicle] = plan.inputs.front();
        }
      }
      for (int f : index) {
        flows_[f].route.clear();
        flows_[f].next_slot = -1;
      }
      const ScheduleDecision decision = problem.decode(best.genome.routing);
      for (const auto& r : decision.routes) {
        Flow& fl = flows_[index[r.packet]];
        commit(fl, topology_.paths(fl.holder, fl.destination)[r.path], slot + r.slot);
      }
    } else {
      std::vector<int> reserved(horizon, 0);
      for (const auto& f : flows_) {
        if (f.done || f.route.empty()) continue;
        const int hops = static_cast<int>(f.route.size()) - 1;
        for (int h = 0; h < hops; ++h) {
          const int rel = f.next_slot - slot + h;
          if (rel >= 0 && rel < horizon) ++reserved[rel];
        }
      }
      std::vector<int> index;
      const auto packets = pending_packets(slot, &index);
      if (!packets.empty()) {
        const ScheduleDecision decision =
            solve_schedule_greedy(packets, topology_, cfg_.n_channels, horizon, reserved);
        for (const auto& r : decision.routes) {
          Flow& fl = flows_[index[r.packet]];
          commit(fl, topology_.paths(fl.holder, fl.destination)[r.path], slot + r.slot);
        }
      }
    }

    for (auto& f : flows_) {
      if (f.done || f.route.size() < 2 || f.next_slot != slot) continue;
      attempt(f, f.route[1], contender_factor_, slot, rec);
    }
  }

  void transmit_baseline(int slot, SlotRecord& rec) {
    struct Tx {
      int flow;
      int next;
      int channel;
    };
    std::vector<Tx> txs;
    for (int v = 0; v < n_vehicles(); ++v) {
      int hol = -1;
      for (int f = 0; f < static_cast<int>(flows_.size()); ++f) {
        const Flow& fl = flows_[f];
        if (fl.done || fl.holder != v) continue;
        if (hol < 0 || fl.arrival < flows_[hol].arrival) hol = f;
      }
      if (hol < 0) continue;
      Flow& fl = flows_[hol];
      Packet p{fl.id, fl.arrival, cfg_.traffic.deadline_slots, fl.size, fl.holder, fl.destination};
      const auto path = baseline_route(topology_, p, cfg_.routing.max_hops, cfg_.metric_weights);
      if (!path) {
        fl.done = true;
        log_.packets[fl.record].outcome = "dead_end";
        continue;
      }
      txs.push_back({hol, path->hops[1], std::uniform_int_distribution<int>(0, cfg_.n_channels - 1)(mac_rng_)});
    }
    std::vector<int> per_channel(cfg_.n_channels, 0);
    for (const auto& tx : txs) ++per_channel[tx.channel];
    for (const auto& tx : txs) attempt(flows_[tx.flow], tx.next, per_channel[tx.channel] * contender_factor_, slot, rec);
  }

  // One hop of flow f from its holder to `next`.
  void attempt(Flow& f, int next, int contenders, int slot, SlotRecord& rec) {
    const int from = f.holder;
    auto li = topology_.link_index(from, next);
    auto& loss = data_loss_.at({from, next});
    bool ok = false;
    if (li) {
      const TopoLink& link = topology_.links[*li];
      const double offset = topology_.node(next).is_rsu ? cfg_.channel.l_v2i_0 : cfg_.channel.l0;
      const LinkSnapshot snap = make_link_snapshot(link.planar, offset, f.size, contenders, cfg_.channel);
      rec.active_capacity_bits += snap.rate * cfg_.channel.tau_slot;
      const bool fits = f.size <= snap.rate * cfg_.channel.tau_slot;
      ok = sample_delivery(snap.delivery_prob, loss) == 1 && fits;
    } else {
      sample_delivery(0.0, loss);
    }
    const bool relay = next != f.destination;
    if (!ok) {
      f.route.clear();
      f.next_slot = -1;
      return;
    }
    if (from != log_.packets[f.record].source) ++status_[from].relayed_ok;
    if (relay) ++status_[next].relay_received;
    f.holder = next;
    ++log_.packets[f.record].hops;
    if (!f.route.empty() && f.route.size() >= 2 && f.route[1] == next) {
      f.route.erase(f.route.begin());
      f.next_slot = slot + 1;
    } else {
      f.route.clear();
      f.next_slot = -1;
    }
    if (next == f.destination) {
      f.done = true;
      f.route.clear();
      log_.packets[f.record].delivered_slot = slot + 1;
      log_.packets[f.record].outcome = "delivered";
      rec.delivered_bits += f.size;
      ++rec.delivered_packets;
    }
  }

  void expire(int slot) {
    for (auto& f : flows_) {
      if (f.done || slot < f.last_slot) continue;
      f.done = true;
      log_.packets[f.record].outcome = "expired";
    }
    refresh_queues();
  }

  std::optional<double> gap_of(int i) const {
    const auto& me = vehicle(i);
    if (me.index == 0) return std::nullopt;
    return (vehicle(i - 1).state.position() - me.state.position()).norm() - cfg_.safety.l_w;
  }

  void record_vehicles(SlotRecord& rec) const {
    for (int i = 0; i < n_vehicles(); ++i) {
      const auto& me = vehicle(i);
      VehicleRecord r;
      r.id = me.id;
      r.platoon = me.platoon;
      r.px = me.state.px;
      r.py = me.state.py;
      r.psi = me.state.psi;
      r.v = me.state.v;
      r.a = inputs_[i].a;
      r.held = held_[i];
      r.gap = gap_of(i);
      if (r.gap) {
        const auto& pred = vehicle(i - 1);
        r.h = safety_function(ManeuverMode::Following, me.state.position(), pred.state.position(), me.state.v,
                              cfg_.safety);
        r.v_err = me.state.v - vehicle(leader_of(i)).state.v;
        r.p_err = *r.gap - cfg_.desired_gap;
        r.tracking_ok = std::abs(r.v_err) <= cfg_.err_v_bound && std::abs(r.p_err) <= cfg_.err_p_bound;
      }
      rec.vehicles.push_back(r);
    }
  }

  bool collided() const {
    for (int i = 0; i < n_vehicles(); ++i)
      if (auto g = gap_of(i); g && *g <= 0) return true;
    return false;
  }

  void advance() {
    for (int i = 0; i < n_vehicles(); ++i) {
      auto& me = world_.vehicles[i];
      Input u = inputs_[i];
      u.r = std::clamp(u.r, cfg_.platoon.r_min, cfg_.platoon.r_max);
      u.a = std::clamp(u.a, cfg_.platoon.a_min, cfg_.platoon.a_max);
      inputs_[i] = u;
      State next = step(me.state, u, cfg_.dt);
      next.v = std::clamp(next.v, cfg_.platoon.v_min, cfg_.platoon.v_max);
      me.state = next;
    }
  }

  const ScenarioConfig& cfg_;
  std::uint64_t seed_;
  Mode mode_;
  World world_;
  MetricsLog log_;

  std::vector<PredictedTrajectory> plans_;
  std::vector<int> plan_slots_;
  std::vector<std::vector<KnownPlan>> known_;
  std::vector<std::vector<int>> delivered_;
  std::vector<Input> inputs_;
  std::vector<bool> held_;
  std::vector<bool> cold_;
  std::vector<Eigen::Vector4d> ustar_;
  std::vector<Eigen::Vector4d> xstar_;
  std::vector<FollowerTask> pending_tasks_;

  std::map<std::pair<int, int>, LossProcess> beacon_loss_;
  std::map<std::pair<int, int>, LossProcess> data_loss_;
  int contender_factor_ = 1;
  std::vector<Rng> traffic_rng_;
  std::vector<double> phase_;
  Rng mac_rng_;

  std::vector<NodeStatus> status_;
  std::vector<Flow> flows_;
  int next_packet_id_ = 0;
  TopologySnapshot topology_;
};

}  // namespace

MetricsLog run(const ScenarioConfig& config, std::uint64_t seed, Mode mode) {
  config.validate();
  Simulator sim(config, seed, mode);
  return sim.run();
}

}  // namespace dynaroute
