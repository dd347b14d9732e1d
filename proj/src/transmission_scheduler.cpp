#include "dynaroute/transmission_scheduler.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <stdexcept>

namespace dynaroute {

void TopologySnapshot::index() {
  link_lookup_.clear();
  node_lookup_.clear();
  for (int i = 0; i < static_cast<int>(links.size()); ++i) link_lookup_[{links[i].from, links[i].to}] = i;
  for (int i = 0; i < static_cast<int>(nodes.size()); ++i) node_lookup_[nodes[i].id] = i;
}

std::optional<int> TopologySnapshot::link_index(int from, int to) const {
  auto it = link_lookup_.find({from, to});
  if (it == link_lookup_.end()) return std::nullopt;
  return it->second;
}

const TopoNode& TopologySnapshot::node(int id) const {
  auto it = node_lookup_.find(id);
  if (it == node_lookup_.end()) throw std::out_of_range("topology: unknown node " + std::to_string(id));
  return nodes[it->second];
}

std::vector<int> TopologySnapshot::neighbors(int id) const {
  std::vector<int> out;
  for (auto it = link_lookup_.lower_bound({id, std::numeric_limits<int>::min()});
       it != link_lookup_.end() && it->first.first == id; ++it)
    out.push_back(it->first.second);
  return out;
}

const std::vector<PathCandidate>& TopologySnapshot::paths(int source, int destination) const {
  static const std::vector<PathCandidate> none;
  auto it = candidates.find({source, destination});
  return it == candidates.end() ? none : it->second;
}

namespace {

double node_weight_in(const TopologySnapshot& topology, int id, const MetricWeights& weights) {
  const TopoNode& n = topology.node(id);
  if (n.is_rsu) return node_weight(1, 0, 1.0, weights, false);
  std::vector<int> statuses;
  for (int nb : topology.neighbors(id)) {
    const TopoNode& m = topology.node(nb);
    if (!m.is_rsu) statuses.push_back(vehicle_status(m.status.queue_len, m.status.queue_max));
  }
  return node_weight(vehicle_status(n.status.queue_len, n.status.queue_max), neighbor_transmit_count(statuses),
                     relay_reliability(n.status.relayed_ok, n.status.relay_received), weights, true);
}

}  // namespace

PathCandidate score_path(const TopologySnapshot& topology, const std::vector<int>& hops, const MetricWeights& weights) {
  if (hops.size() < 2) throw std::invalid_argument("score_path: a path needs at least two nodes");
  PathCandidate path;
  path.hops = hops;
  const Vec2d dest = topology.node(hops.back()).position;
  std::vector<double> speeds;
  for (int id : hops) {
    const TopoNode& n = topology.node(id);
    if (!n.is_rsu) speeds.push_back(n.speed);
  }
  path.sigma_v = speeds.empty() ? 0.0 : velocity_variance(speeds);
  for (std::size_t h = 0; h + 1 < hops.size(); ++h) {
    auto li = topology.link_index(hops[h], hops[h + 1]);
    if (!li) throw std::invalid_argument("score_path: missing link");
    const TopoLink& link = topology.links[*li];
    HopMetrics m;
    m.staying_time = link.staying_time;
    m.delivery_prob = link.snapshot.delivery_prob;
    const Vec2d sender = topology.node(hops[h]).position;
    m.direction_ratio = (dest - sender).norm() > 0
                            ? direction_ratio(topology.node(hops[h + 1]).position, sender, dest)
                            : 0.0;
    path.per_hop.push_back(m);
    path.node_weights.push_back(node_weight_in(topology, hops[h + 1], weights));
  }
  path.path_value = dynaroute::path_value(path.per_hop, path.node_weights, path.sigma_v);
  return path;
}

std::vector<PathCandidate> enumerate_paths(const TopologySnapshot& topology, int source, int destination, int max_hops,
                                           const MetricWeights& weights) {
  if (source == destination) throw std::invalid_argument("enumerate_paths: source equals destination");
  if (max_hops < 1) throw std::invalid_argument("enumerate_paths: max_hops must be >= 1");
  std::vector<PathCandidate> out;
  std::vector<int> stack{source};
  std::set<int> on_path{source};

  auto dfs = [&](auto&& self, int at) -> void {
    if (at == destination) {
      out.push_back(score_path(topology, stack, weights));
      return;
    }
    if (static_cast<int>(stack.size()) - 1 >= max_hops) return;
    // Only the destination may be an RSU; RSUs do not relay.
    if (at != source && topology.node(at).is_rsu) return;
    for (int nb : topology.neighbors(at)) {
      if (on_path.contains(nb)) continue;
      stack.push_back(nb);
      on_path.insert(nb);
      self(self, nb);
      on_path.erase(nb);
      stack.pop_back();
    }
  };
  dfs(dfs, source);
  return out;
}

std::vector<PathCandidate> best_paths(std::vector<PathCandidate> paths, int cap) {
  std::stable_sort(paths.begin(), paths.end(),
                   [](const PathCandidate& a, const PathCandidate& b) { return a.path_value > b.path_value; });
  if (static_cast<int>(paths.size()) > cap) paths.resize(cap);
  return paths;
}

std::optional<PathCandidate> greedy_hop_path(const TopologySnapshot& topology, int source, int destination,
                                             int max_hops, const MetricWeights& weights) {
  std::vector<int> hops{source};
  std::set<int> visited{source};
  while (static_cast<int>(hops.size()) - 1 < max_hops) {
    const int at = hops.back();
    if (topology.link_index(at, destination)) {
      hops.push_back(destination);
      return score_path(topology, hops, weights);
    }
    std::optional<int> best;
    double best_value = -1;
    for (int nb : topology.neighbors(at)) {
      if (visited.contains(nb) || topology.node(nb).is_rsu) continue;
      std::vector<int> trial{at, nb};
      // Score the hop as if nb were the last relay toward the destination.
      const TopoLink& link = topology.links[*topology.link_index(at, nb)];
      HopMetrics m{link.staying_time,
                   direction_ratio(topology.node(nb).position, topology.node(at).position,
                                   topology.node(destination).position),
                   link.snapshot.delivery_prob};
      const double value = hop_value(m, node_weight_in(topology, nb, weights), 0.0);
      if (value > best_value) {
        best_value = value;
        best = nb;
      }
    }
    if (!best) return std::nullopt;
    hops.push_back(*best);
    visited.insert(*best);
  }
  return std::nullopt;
}

int path_link(const TopologySnapshot& topology, const PathCandidate& path, int hop) {
  auto li = topology.link_index(path.hops.at(hop), path.hops.at(hop + 1));
  if (!li) throw std::invalid_argument("path_link: path uses a missing link");
  return *li;
}

namespace {

bool window_ok(const Packet& p, int start, int hops, int horizon) {
  const int end = start + hops - 1;
  return start >= p.arrival_slot && end <= p.last_slot() && start >= 0 && end < horizon;
}

}  // namespace

bool check_feasible(const ScheduleDecision& decision, const std::vector<Packet>& packets,
                    const TopologySnapshot& topology, int n_channels, int horizon) {
  std::set<int> routed;
  std::map<std::pair<int, int>, int> usage;  // (slot, link) -> transmissions
  for (const auto& r : decision.routes) {
    if (r.packet < 0 || r.packet >= static_cast<int>(packets.size())) return false;
    const Packet& p = packets[r.packet];
    const auto& cands = topology.paths(p.source, p.destination);
    if (r.path < 0 || r.path >= static_cast<int>(cands.size())) return false;
    if (!routed.insert(r.packet).second) return false;  // one route per packet
    const PathCandidate& path = cands[r.path];
    if (!window_ok(p, r.slot, path.hop_count(), horizon)) return false;
    for (int h = 0; h < path.hop_count(); ++h) ++usage[{r.slot + h, path_link(topology, path, h)}];
  }
  std::set<std::pair<int, int>> channel_slots;
  std::map<std::pair<int, int>, int> granted;
  for (const auto& c : decision.channels) {
    if (c.channel < 0 || c.channel >= n_channels || c.slot < 0 || c.slot >= horizon) return false;
    if (c.link < 0 || c.link >= static_cast<int>(topology.links.size())) return false;
    if (!channel_slots.insert({c.channel, c.slot}).second) return false;  // one link per channel-slot
    ++granted[{c.slot, c.link}];
  }
  for (const auto& [key, used] : usage) {
    auto it = granted.find(key);
    if (it == granted.end() || it->second < used) return false;
  }
  return true;
}

double schedule_objective(const ScheduleDecision& decision, const std::vector<Packet>& packets,
                          const TopologySnapshot& topology) {
  double total = 0;
  for (const auto& r : decision.routes) {
    const Packet& p = packets.at(r.packet);
    total += topology.paths(p.source, p.destination).at(r.path).path_value;
  }
  return total;
}

std::optional<std::vector<ChannelAssignment>> grant_channels(const std::vector<RouteAssignment>& routes,
                                                            const std::vector<Packet>& packets,
                                                            const TopologySnapshot& topology, int n_channels,
                                                            int horizon) {
  std::map<std::pair<int, int>, int> usage;  // (slot, link), ordered by slot then link
  for (const auto& r : routes) {
    const Packet& p = packets.at(r.packet);
    const PathCandidate& path = topology.paths(p.source, p.destination).at(r.path);
    for (int h = 0; h < path.hop_count(); ++h) ++usage[{r.slot + h, path_link(topology, path, h)}];
  }
  std::vector<ChannelAssignment> out;
  std::vector<int> next_channel(std::max(horizon, 0), 0);
  for (const auto& [key, count] : usage) {
    const auto [slot, link] = key;
    if (slot < 0 || slot >= horizon) return std::nullopt;
    for (int c = 0; c < count; ++c) {
      if (next_channel[slot] >= n_channels) return std::nullopt;
      out.push_back({next_channel[slot]++, slot, link});
    }
  }
  return out;
}

ScheduleDecision solve_schedule_exact(const std::vector<Packet>& packets, const TopologySnapshot& topology,
                                      int n_channels, int horizon, const ExactLimits& limits) {
  if (static_cast<int>(packets.size()) > limits.max_packets || n_channels > limits.max_channels ||
      horizon > limits.max_horizon)
    throw InstanceTooLarge("solve_schedule_exact: instance too large, use solve_schedule_greedy");
  for (const auto& p : packets)
    if (static_cast<int>(topology.paths(p.source, p.destination).size()) > limits.max_paths)
      throw InstanceTooLarge("solve_schedule_exact: too many candidate paths, use solve_schedule_greedy");

  // Options per packet in lexicographic order: unrouted, then (slot, path).
  std::vector<std::vector<std::optional<RouteAssignment>>> options(packets.size());
  for (int g = 0; g < static_cast<int>(packets.size()); ++g) {
    options[g].push_back(std::nullopt);
    const auto& cands = topology.paths(packets[g].source, packets[g].destination);
    for (int s = 0; s < horizon; ++s)
      for (int l = 0; l < static_cast<int>(cands.size()); ++l)
        if (window_ok(packets[g], s, cands[l].hop_count(), horizon)) options[g].push_back(RouteAssignment{g, s, l});
  }

  std::vector<int> slot_load(std::max(horizon, 0), 0);
  std::vector<RouteAssignment> current, best;
  double best_value = 0;
  bool have_best = false;

  auto search = [&](auto&& self, std::size_t g, double value) -> void {
    if (g == packets.size()) {
      if (!have_best || value > best_value) {
        have_best = true;
        best_value = value;
        best = current;
      }
      return;
    }
    for (const auto& opt : options[g]) {
      if (!opt) {
        self(self, g + 1, value);
        continue;
      }
      const PathCandidate& path = topology.paths(packets[g].source, packets[g].destination)[opt->path];
      bool fits = true;
      for (int h = 0; h < path.hop_count(); ++h) fits = fits && slot_load[opt->slot + h] < n_channels;
      if (!fits) continue;
      for (int h = 0; h < path.hop_count(); ++h) ++slot_load[opt->slot + h];
      current.push_back(*opt);
      self(self, g + 1, value + path.path_value);
      current.pop_back();
      for (int h = 0; h < path.hop_count(); ++h) --slot_load[opt->slot + h];
    }
  };
  search(search, 0, 0.0);

  ScheduleDecision decision;
  decision.routes = best;
  decision.channels = grant_channels(best, packets, topology, n_channels, horizon).value();
  return decision;
}

ScheduleDecision solve_schedule_greedy(const std::vector<Packet>& packets, const TopologySnapshot& topology,
                                       int n_channels, int horizon) {
  return solve_schedule_greedy(packets, topology, n_channels, horizon, std::vector<int>(std::max(horizon, 0), 0));
}

ScheduleDecision solve_schedule_greedy(const std::vector<Packet>& packets, const TopologySnapshot& topology,
                                       int n_channels, int horizon, const std::vector<int>& reserved) {
  auto best_value = [&](const Packet& p) {
    double v = 0;
    for (const auto& c : topology.paths(p.source, p.destination)) v = std::max(v, c.path_value);
    return v;
  };
  std::vector<int> order(packets.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> values(packets.size());
  for (std::size_t g = 0; g < packets.size(); ++g) values[g] = best_value(packets[g]);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (packets[a].last_slot() != packets[b].last_slot()) return packets[a].last_slot() < packets[b].last_slot();
    if (values[a] != values[b]) return values[a] > values[b];
    return packets[a].id < packets[b].id;
  });

  std::vector<int> slot_load(std::max(horizon, 0), 0);
  for (int k = 0; k < horizon && k < static_cast<int>(reserved.size()); ++k) slot_load[k] = reserved[k];

  ScheduleDecision decision;
  for (int g : order) {
    const auto& cands = topology.paths(packets[g].source, packets[g].destination);
    std::vector<int> by_value(cands.size());
    std::iota(by_value.begin(), by_value.end(), 0);
    std::stable_sort(by_value.begin(), by_value.end(),
                     [&](int a, int b) { return cands[a].path_value > cands[b].path_value; });
    bool placed = false;
    for (int l : by_value) {
      const int hops = cands[l].hop_count();
      for (int s = 0; s < horizon && !placed; ++s) {
        if (!window_ok(packets[g], s, hops, horizon)) continue;
        bool fits = true;
        for (int h = 0; h < hops; ++h) fits = fits && slot_load[s + h] < n_channels;
        if (!fits) continue;
        for (int h = 0; h < hops; ++h) ++slot_load[s + h];
        decision.routes.push_back({g, s, l});
        placed = true;
      }
      if (placed) break;
    }
  }
  // Channel numbering starts above the reserved channels of each slot.
  std::map<std::pair<int, int>, int> usage;
  for (const auto& r : decision.routes) {
    const Packet& p = packets[r.packet];
    const PathCandidate& path = topology.paths(p.source, p.destination)[r.path];
    for (int h = 0; h < path.hop_count(); ++h) ++usage[{r.slot + h, path_link(topology, path, h)}];
  }
  std::vector<int> next_channel(std::max(horizon, 0), 0);
  for (int k = 0; k < horizon && k < static_cast<int>(reserved.size()); ++k) next_channel[k] = reserved[k];
  for (const auto& [key, count] : usage)
    for (int c = 0; c < count; ++c) decision.channels.push_back({next_channel[key.first]++, key.first, key.second});
  return decision;
}

ScheduleDecision place_routes(const std::vector<Packet>& packets, const std::vector<int>& choices,
                              const TopologySnapshot& topology, int n_channels, int horizon,
                              const std::vector<int>& reserved) {
  if (choices.size() != packets.size()) throw std::invalid_argument("place_routes: one choice per packet expected");
  std::vector<int> order(packets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (packets[a].last_slot() != packets[b].last_slot()) return packets[a].last_slot() < packets[b].last_slot();
    return packets[a].id < packets[b].id;
  });
  std::vector<int> slot_load(std::max(horizon, 0), 0);
  for (int k = 0; k < horizon && k < static_cast<int>(reserved.size()); ++k) slot_load[k] = reserved[k];
  std::vector<int> next_channel = slot_load;

  ScheduleDecision decision;
  for (int g : order) {
    const int l = choices[g];
    if (l < 0) continue;
    const auto& cands = topology.paths(packets[g].source, packets[g].destination);
    if (l >= static_cast<int>(cands.size())) throw std::out_of_range("place_routes: path index out of range");
    const int hops = cands[l].hop_count();
    for (int s = 0; s < horizon; ++s) {
      if (!window_ok(packets[g], s, hops, horizon)) continue;
      bool fits = true;
      for (int h = 0; h < hops; ++h) fits = fits && slot_load[s + h] < n_channels;
      if (!fits) continue;
      for (int h = 0; h < hops; ++h) {
        ++slot_load[s + h];
        decision.channels.push_back({next_channel[s + h]++, s + h, path_link(topology, cands[l], h)});
      }
      decision.routes.push_back({g, s, l});
      break;
    }
  }
  return decision;
}

}  // namespace dynaroute
