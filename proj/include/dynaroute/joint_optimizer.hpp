#pragma once

// NSGA-II over joint control/routing genomes. Objectives are maximized as
// (Y, -J); reference-point niching decides the last admitted front.

#include "dynaroute/rng.hpp"
#include "dynaroute/vehicle_dynamics.hpp"

#include <Eigen/Dense>

#include <limits>
#include <vector>

namespace dynaroute {

struct Genome {
  std::vector<std::vector<Input>> control;  // per vehicle, horizon entries
  std::vector<int> routing;                 // per packet, candidate path index or -1

  bool operator==(const Genome&) const = default;
};

/// Lexicographic order over control (r, a) then routing genes.
bool genome_less(const Genome& a, const Genome& b);

struct Individual {
  Genome genome;
  double objective_y = 0;
  double objective_j = 0;
  bool feasible = false;
  Eigen::Vector3d indicators = Eigen::Vector3d::Zero();  // control effort, velocity error, position error
  int rank = -1;
  double crowding = 0;
};

struct Evaluation {
  double objective_y = 0;
  double objective_j = 0;
  bool feasible = false;
  Eigen::Vector3d indicators = Eigen::Vector3d::Zero();
};

inline constexpr double INFEASIBLE_J = 1e12;

/// Bounds of the genome space.
struct GenomeShape {
  int n_vehicles = 0;
  int horizon = 0;
  std::vector<int> path_counts;  // candidates per packet
  Input lower{-0.5, -2.5};
  Input upper{0.5, 2.5};
};

class JointProblemBase {
 public:
  virtual ~JointProblemBase() = default;
  virtual const GenomeShape& shape() const = 0;
  /// Pure; may be called concurrently.
  virtual Evaluation evaluate(const Genome& genome) const = 0;
  /// Genomes placed in the initial population ahead of random ones.
  virtual std::vector<Genome> seed_genomes() const { return {}; }
};

struct GaParams {
  int population = 64;
  int generations = 100;
  double crossover_rate = 0.9;
  double mutation_rate = 0.1;
  int tournament_size = 2;
  std::uint64_t rng_seed = 1;
  int divisions = 9;
  bool additive_crowding = false;
  double mutation_sigma = 0.1;  // fraction of each input range
  int threads = 1;

  void validate() const;
};

Evaluation evaluate(const Genome& genome, const JointProblemBase& problem);

/// Feasible-first, then Pareto dominance on (Y, -J).
bool dominates(const Individual& a, const Individual& b);

/// Fronts as index lists into `population`; sets each individual's rank.
std::vector<std::vector<int>> non_dominated_sort(std::vector<Individual>& population);

inline constexpr double CROWDING_SENTINEL = std::numeric_limits<double>::max();

struct CrowdingResult {
  std::vector<double> distance_y;  // normalized neighbour gap on Y
  std::vector<double> distance_j;  // normalized neighbour gap on -J
  std::vector<double> combined;
};

/// Per member of `front` (indices into population). Boundary members of
/// either objective get CROWDING_SENTINEL in the combined value.
CrowdingResult crowding_distance(const std::vector<Individual>& population, const std::vector<int>& front,
                                 bool additive = false);

struct ReferencePointSet {
  std::vector<Eigen::Vector3d> points;
  int divisions = 0;
};

ReferencePointSet reference_points(int divisions);

/// Chooses `count` members of `last_front` by niche counts over the reference
/// lines, given the members already admitted.
std::vector<int> niche_select(const std::vector<Individual>& population, const std::vector<int>& admitted,
                              const std::vector<int>& last_front, int count, const ReferencePointSet& refs, Rng& rng);

const Individual& tournament_select(const std::vector<Individual>& population, int k, Rng& rng);

std::pair<Genome, Genome> crossover_mutate(const Genome& parent_a, const Genome& parent_b, const GenomeShape& shape,
                                           const GaParams& params, Rng& rng);

Genome random_genome(const GenomeShape& shape, Rng& rng);

/// Greater Y - J; ties by lower J, then lexicographic genome.
bool scalar_better(const Individual& a, const Individual& b);

struct ParetoFront {
  std::vector<Individual> members;
  std::vector<double> best_scalar_per_generation;  // max feasible Y - J, index 0 = initial population
};

ParetoFront evolve(const JointProblemBase& problem, const GaParams& params);

const Individual& scalarize_select(const std::vector<Individual>& front);

}  // namespace dynaroute
