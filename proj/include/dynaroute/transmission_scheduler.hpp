#pragma once

// Deadline-constrained routing and channel scheduling over a slotted horizon.
// A packet routed on path l starting at slot s sends hop h at slot s + h and
// needs a channel granted to that hop's link in that slot.

#include "dynaroute/channel_model.hpp"
#include "dynaroute/link_metrics.hpp"

#include <map>
#include <optional>
#include <utility>
#include <vector>

namespace dynaroute {

struct Packet {
  int id = 0;
  int arrival_slot = 0;
  int deadline_slots = 1;
  double size = 1.0;  // bits
  int source = 0;
  int destination = 0;

  int last_slot() const { return arrival_slot + deadline_slots; }
};

struct TopoNode {
  int id = 0;
  Vec2d position = Vec2d::Zero();
  double speed = 0;
  bool is_rsu = false;
  NodeStatus status;
};

struct TopoLink {
  int from = 0;
  int to = 0;
  double planar = 0;  // ground distance, m
  LinkSnapshot snapshot;
  double staying_time = 0;
};

class TopologySnapshot {
 public:
  std::vector<TopoNode> nodes;
  std::vector<TopoLink> links;  // directed
  std::map<std::pair<int, int>, std::vector<PathCandidate>> candidates;

  /// Rebuilds the (from, to) -> link lookup; call after editing `links`.
  void index();
  std::optional<int> link_index(int from, int to) const;
  const TopoNode& node(int id) const;
  /// Neighbour ids reachable in one hop, ascending.
  std::vector<int> neighbors(int id) const;
  const std::vector<PathCandidate>& paths(int source, int destination) const;

 private:
  std::map<std::pair<int, int>, int> link_lookup_;
  std::map<int, int> node_lookup_;
};

/// Scores one node sequence with the composite path value.
PathCandidate score_path(const TopologySnapshot& topology, const std::vector<int>& hops, const MetricWeights& weights);

/// All loop-free paths of at most max_hops hops in lexicographic node order.
std::vector<PathCandidate> enumerate_paths(const TopologySnapshot& topology, int source, int destination, int max_hops,
                                           const MetricWeights& weights);

/// Keeps the `cap` best candidates by path value (stable on ties).
std::vector<PathCandidate> best_paths(std::vector<PathCandidate> paths, int cap);

/// Hop-by-hop construction taking the highest-valued next hop at each node.
std::optional<PathCandidate> greedy_hop_path(const TopologySnapshot& topology, int source, int destination,
                                             int max_hops, const MetricWeights& weights);

struct RouteAssignment {
  int packet = 0;  // index into the packet list
  int slot = 0;    // start slot
  int path = 0;    // index into the packet's candidate list
};

struct ChannelAssignment {
  int channel = 0;
  int slot = 0;
  int link = 0;  // index into topology.links
};

struct ScheduleDecision {
  std::vector<RouteAssignment> routes;
  std::vector<ChannelAssignment> channels;
};

/// Link used by hop `hop` of a path, or throws if the path is not in the topology.
int path_link(const TopologySnapshot& topology, const PathCandidate& path, int hop);

bool check_feasible(const ScheduleDecision& decision, const std::vector<Packet>& packets,
                    const TopologySnapshot& topology, int n_channels, int horizon);

double schedule_objective(const ScheduleDecision& decision, const std::vector<Packet>& packets,
                          const TopologySnapshot& topology);

/// Derives channel grants for a set of route assignments; returns nothing when
/// some slot needs more channels than exist.
std::optional<std::vector<ChannelAssignment>> grant_channels(const std::vector<RouteAssignment>& routes,
                                                            const std::vector<Packet>& packets,
                                                            const TopologySnapshot& topology, int n_channels,
                                                            int horizon);

struct ExactLimits {
  int max_packets = 3;
  int max_channels = 2;
  int max_horizon = 4;
  int max_paths = 6;
};

class InstanceTooLarge : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

ScheduleDecision solve_schedule_exact(const std::vector<Packet>& packets, const TopologySnapshot& topology,
                                      int n_channels, int horizon, const ExactLimits& limits = {});

/// Greedy in (deadline, -best path value, id) order.
ScheduleDecision solve_schedule_greedy(const std::vector<Packet>& packets, const TopologySnapshot& topology,
                                       int n_channels, int horizon);

/// Same, with `reserved[k]` channels already committed in slot k.
ScheduleDecision solve_schedule_greedy(const std::vector<Packet>& packets, const TopologySnapshot& topology,
                                       int n_channels, int horizon, const std::vector<int>& reserved);

/// Places each packet on its chosen candidate (-1 = unrouted) at the earliest
/// slot with a free channel for every hop, in (deadline, id) order.
ScheduleDecision place_routes(const std::vector<Packet>& packets, const std::vector<int>& choices,
                              const TopologySnapshot& topology, int n_channels, int horizon,
                              const std::vector<int>& reserved = {});

}  // namespace dynaroute
