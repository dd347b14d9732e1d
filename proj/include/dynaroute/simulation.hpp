#pragma once

// Slot-by-slot co-simulation of platoon control and packet transport.

#include "dynaroute/joint_optimizer.hpp"
#include "dynaroute/metrics.hpp"
#include "dynaroute/scenario.hpp"
#include "dynaroute/transmission_scheduler.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dynaroute {

enum class Mode { DynaRoute, Baseline };

Mode parse_mode(const std::string& name);
std::string mode_name(Mode mode);

/// Directed V2V and V2I links within comm_range, scored for packets of
/// `nominal_bits` with `contenders` transmitters per channel.
TopologySnapshot build_topology(const World& world, const std::vector<NodeStatus>& status,
                                const ScenarioConfig& config, double nominal_bits, int contenders);

/// Fills topology.candidates for one (source, destination) pair.
void add_candidates(TopologySnapshot& topology, int source, int destination, const ScenarioConfig& config);

/// Greedy geographic forwarding: each hop goes to the neighbour closest to the
/// destination among those closer than the current node and able to relay.
/// Empty on a dead end.
std::optional<PathCandidate> baseline_route(const TopologySnapshot& topology, const Packet& packet, int max_hops,
                                            const MetricWeights& weights);

/// One follower's control problem as seen by the joint optimizer.
struct FollowerTask {
  int vehicle = 0;
  DmpcProblem problem;
  SafetyContext safety;
  std::vector<Input> seed;  // the follower's own DMPC solution
};

/// Control genes drive the followers; routing genes pick each pending
/// packet's candidate path.
class JointProblem : public JointProblemBase {
 public:
  JointProblem(std::vector<FollowerTask> followers, std::vector<Packet> packets, const TopologySnapshot& topology,
               const ScenarioConfig& config);

  const GenomeShape& shape() const override { return shape_; }
  Evaluation evaluate(const Genome& genome) const override;
  std::vector<Genome> seed_genomes() const override;

  ScheduleDecision decode(const std::vector<int>& routing) const;
  const std::vector<Packet>& packets() const { return packets_; }

 private:
  std::vector<FollowerTask> followers_;
  std::vector<Packet> packets_;
  const TopologySnapshot& topology_;
  const ScenarioConfig& config_;
  GenomeShape shape_;
};

MetricsLog run(const ScenarioConfig& config, std::uint64_t seed, Mode mode);

}  // namespace dynaroute
