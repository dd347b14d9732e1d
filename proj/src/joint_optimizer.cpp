#include "dynaroute/joint_optimizer.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <stdexcept>
#include <thread>

namespace dynaroute {

void GaParams::validate() const {
  if (population < 4 || population % 2 != 0) throw std::invalid_argument("ga: population must be even and >= 4");
  if (generations < 0) throw std::invalid_argument("ga: generations must be >= 0");
  if (crossover_rate < 0 || crossover_rate > 1 || mutation_rate < 0 || mutation_rate > 1)
    throw std::invalid_argument("ga: rates must lie in [0,1]");
  if (tournament_size < 1 || tournament_size > population)
    throw std::invalid_argument("ga: tournament_size must lie in [1, population]");
  if (divisions < 1) throw std::invalid_argument("ga: divisions must be >= 1");
  if (mutation_sigma < 0) throw std::invalid_argument("ga: mutation_sigma must be >= 0");
  if (threads < 1) throw std::invalid_argument("ga: threads must be >= 1");
}

bool genome_less(const Genome& a, const Genome& b) {
  auto key = [](const Genome& g) {
    std::vector<double> k;
    for (const auto& seq : g.control)
      for (const auto& u : seq) {
        k.push_back(u.r);
        k.push_back(u.a);
      }
    for (int r : g.routing) k.push_back(r);
    return k;
  };
  return key(a) < key(b);
}

Evaluation evaluate(const Genome& genome, const JointProblemBase& problem) {
  const auto& shape = problem.shape();
  bool ok = static_cast<int>(genome.control.size()) == shape.n_vehicles &&
            genome.routing.size() == shape.path_counts.size();
  for (const auto& seq : genome.control) ok = ok && static_cast<int>(seq.size()) == shape.horizon;
  for (std::size_t g = 0; ok && g < genome.routing.size(); ++g)
    ok = genome.routing[g] >= -1 && genome.routing[g] < shape.path_counts[g];
  if (!ok) return Evaluation{0.0, INFEASIBLE_J, false, Eigen::Vector3d::Zero()};
  try {
    return problem.evaluate(genome);
  } catch (const std::exception&) {
    return Evaluation{0.0, INFEASIBLE_J, false, Eigen::Vector3d::Zero()};
  }
}

bool dominates(const Individual& a, const Individual& b) {
  if (a.feasible != b.feasible) return a.feasible;
  const bool ge = a.objective_y >= b.objective_y && -a.objective_j >= -b.objective_j;
  const bool gt = a.objective_y > b.objective_y || -a.objective_j > -b.objective_j;
  return ge && gt;
}

std::vector<std::vector<int>> non_dominated_sort(std::vector<Individual>& population) {
  const int n = static_cast<int>(population.size());
  std::vector<std::vector<int>> dominated(n);
  std::vector<int> count(n, 0);
  std::vector<std::vector<int>> fronts;
  std::vector<int> current;
  for (int p = 0; p < n; ++p) {
    for (int q = 0; q < n; ++q) {
      if (p == q) continue;
      if (dominates(population[p], population[q]))
        dominated[p].push_back(q);
      else if (dominates(population[q], population[p]))
        ++count[p];
    }
    if (count[p] == 0) current.push_back(p);
  }
  int rank = 0;
  while (!current.empty()) {
    std::vector<int> next;
    for (int p : current) {
      population[p].rank = rank;
      for (int q : dominated[p])
        if (--count[q] == 0) next.push_back(q);
    }
    std::sort(next.begin(), next.end());
    fronts.push_back(std::move(current));
    current = std::move(next);
    ++rank;
  }
  return fronts;
}

CrowdingResult crowding_distance(const std::vector<Individual>& population, const std::vector<int>& front,
                                 bool additive) {
  if (front.empty()) throw std::invalid_argument("crowding_distance: empty front");
  const int m = static_cast<int>(front.size());
  CrowdingResult out;
  out.distance_y.assign(m, 0.0);
  out.distance_j.assign(m, 0.0);
  out.combined.assign(m, 0.0);
  std::vector<bool> boundary(m, m <= 2);

  auto one_objective = [&](auto value, std::vector<double>& dist) {
    std::vector<int> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return value(a) < value(b); });
    const double span = value(order.back()) - value(order.front());
    boundary[order.front()] = true;
    boundary[order.back()] = true;
    dist[order.front()] = CROWDING_SENTINEL;
    dist[order.back()] = CROWDING_SENTINEL;
    for (int i = 1; i + 1 < m; ++i)
      dist[order[i]] = span < 1e-12 ? 0.0 : (value(order[i + 1]) - value(order[i - 1])) / span;
  };
  one_objective([&](int i) { return population[front[i]].objective_y; }, out.distance_y);
  one_objective([&](int i) { return -population[front[i]].objective_j; }, out.distance_j);

  for (int i = 0; i < m; ++i) {
    if (boundary[i]) {
      out.combined[i] = CROWDING_SENTINEL;
      continue;
    }
    out.combined[i] = additive ? out.distance_y[i] + out.distance_j[i] : out.distance_y[i] - out.distance_j[i];
  }
  return out;
}

ReferencePointSet reference_points(int divisions) {
  if (divisions < 1) throw std::invalid_argument("reference_points: divisions must be >= 1");
  ReferencePointSet set;
  set.divisions = divisions;
  for (int i = 0; i <= divisions; ++i)
    for (int j = 0; i + j <= divisions; ++j) {
      const int k = divisions - i - j;
      set.points.emplace_back(static_cast<double>(i) / divisions, static_cast<double>(j) / divisions,
                              static_cast<double>(k) / divisions);
    }
  return set;
}

std::vector<int> niche_select(const std::vector<Individual>& population, const std::vector<int>& admitted,
                              const std::vector<int>& last_front, int count, const ReferencePointSet& refs, Rng& rng) {
  if (count <= 0) return {};
  if (count >= static_cast<int>(last_front.size())) return last_front;

  std::vector<int> all = admitted;
  all.insert(all.end(), last_front.begin(), last_front.end());
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::max());
  Eigen::Vector3d hi = Eigen::Vector3d::Constant(std::numeric_limits<double>::lowest());
  for (int i : all) {
    lo = lo.cwiseMin(population[i].indicators);
    hi = hi.cwiseMax(population[i].indicators);
  }
  const Eigen::Vector3d span = hi - lo;

  auto associate = [&](int i) {
    Eigen::Vector3d f = population[i].indicators - lo;
    for (int d = 0; d < 3; ++d) f(d) = span(d) < 1e-12 ? 0.0 : f(d) / span(d);
    int best = 0;
    double best_dist = std::numeric_limits<double>::max();
    for (int r = 0; r < static_cast<int>(refs.points.size()); ++r) {
      const Eigen::Vector3d w = refs.points[r].normalized();
      const double dist = (f - w * w.dot(f)).norm();
      if (dist < best_dist) {
        best_dist = dist;
        best = r;
      }
    }
    return std::pair{best, best_dist};
  };

  const int n_refs = static_cast<int>(refs.points.size());
  std::vector<int> niche(n_refs, 0);
  for (int i : admitted) ++niche[associate(i).first];
  std::vector<std::vector<std::pair<double, int>>> members(n_refs);  // (distance, individual)
  for (int i : last_front) {
    auto [r, d] = associate(i);
    members[r].push_back({d, i});
  }
  for (auto& m : members) std::sort(m.begin(), m.end());

  std::vector<int> chosen;
  std::vector<bool> open(n_refs, true);
  while (static_cast<int>(chosen.size()) < count) {
    int min_count = std::numeric_limits<int>::max();
    for (int r = 0; r < n_refs; ++r)
      if (open[r] && !members[r].empty()) min_count = std::min(min_count, niche[r]);
    std::vector<int> tied;
    for (int r = 0; r < n_refs; ++r)
      if (open[r] && !members[r].empty() && niche[r] == min_count) tied.push_back(r);
    const int r = tied[std::uniform_int_distribution<int>(0, static_cast<int>(tied.size()) - 1)(rng)];
    std::size_t pick = 0;
    if (niche[r] > 0) pick = std::uniform_int_distribution<std::size_t>(0, members[r].size() - 1)(rng);
    chosen.push_back(members[r][pick].second);
    members[r].erase(members[r].begin() + static_cast<std::ptrdiff_t>(pick));
    ++niche[r];
    if (members[r].empty()) open[r] = false;
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

const Individual& tournament_select(const std::vector<Individual>& population, int k, Rng& rng) {
  if (population.empty()) throw std::invalid_argument("tournament_select: empty population");
  const int n = static_cast<int>(population.size());
  k = std::clamp(k, 1, n);
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  int best = -1;
  for (int d = 0; d < k; ++d) {
    const int j = std::uniform_int_distribution<int>(d, n - 1)(rng);
    std::swap(idx[d], idx[j]);
    const int c = idx[d];
    if (best < 0) {
      best = c;
      continue;
    }
    const auto& a = population[c];
    const auto& b = population[best];
    if (a.rank < b.rank || (a.rank == b.rank && (a.crowding > b.crowding || (a.crowding == b.crowding && c < best))))
      best = c;
  }
  return population[best];
}

namespace {

Input clamp_input(Input u, const GenomeShape& shape) {
  u.r = std::clamp(u.r, shape.lower.r, shape.upper.r);
  u.a = std::clamp(u.a, shape.lower.a, shape.upper.a);
  return u;
}

int random_path(int n_paths, Rng& rng) {
  if (n_paths <= 0) return -1;
  return std::uniform_int_distribution<int>(0, n_paths - 1)(rng);
}

}  // namespace

Genome random_genome(const GenomeShape& shape, Rng& rng) {
  Genome g;
  g.control.assign(shape.n_vehicles, std::vector<Input>(shape.horizon));
  std::uniform_real_distribution<double> ur(shape.lower.r, shape.upper.r);
  std::uniform_real_distribution<double> ua(shape.lower.a, shape.upper.a);
  for (auto& seq : g.control)
    for (auto& u : seq) u = Input{ur(rng), ua(rng)};
  for (int n : shape.path_counts) g.routing.push_back(random_path(n, rng));
  return g;
}

std::pair<Genome, Genome> crossover_mutate(const Genome& parent_a, const Genome& parent_b, const GenomeShape& shape,
                                           const GaParams& params, Rng& rng) {
  if (parent_a.control.size() != parent_b.control.size() || parent_a.routing.size() != parent_b.routing.size())
    throw std::invalid_argument("crossover_mutate: parents differ in shape");
  Genome a = parent_a;
  Genome b = parent_b;
  if (uniform01(rng) < params.crossover_rate) {
    for (std::size_t v = 0; v < a.control.size(); ++v) {
      if (a.control[v].size() != b.control[v].size())
        throw std::invalid_argument("crossover_mutate: parents differ in shape");
      for (std::size_t k = 0; k < a.control[v].size(); ++k) {
        const double lam = uniform01(rng);
        const Eigen::Vector2d x = parent_a.control[v][k].vec();
        const Eigen::Vector2d y = parent_b.control[v][k].vec();
        const Eigen::Vector2d ca = y + lam * (x - y);
        const Eigen::Vector2d cb = x + lam * (y - x);
        a.control[v][k] = Input{ca(0), ca(1)};
        b.control[v][k] = Input{cb(0), cb(1)};
      }
    }
    for (std::size_t g = 0; g < a.routing.size(); ++g)
      if (uniform01(rng) < 0.5) std::swap(a.routing[g], b.routing[g]);
  }

  std::normal_distribution<double> gauss(0.0, 1.0);
  const double sr = params.mutation_sigma * (shape.upper.r - shape.lower.r);
  const double sa = params.mutation_sigma * (shape.upper.a - shape.lower.a);
  auto mutate = [&](Genome& g) {
    if (params.mutation_rate <= 0) return;
    for (auto& seq : g.control)
      for (auto& u : seq) {
        if (uniform01(rng) < params.mutation_rate) u.r += sr * gauss(rng);
        if (uniform01(rng) < params.mutation_rate) u.a += sa * gauss(rng);
        u = clamp_input(u, shape);
      }
    for (std::size_t p = 0; p < g.routing.size(); ++p)
      if (uniform01(rng) < params.mutation_rate) g.routing[p] = random_path(shape.path_counts.at(p), rng);
  };
  mutate(a);
  mutate(b);
  return {std::move(a), std::move(b)};
}

bool scalar_better(const Individual& a, const Individual& b) {
  if (a.feasible != b.feasible) return a.feasible;
  const double sa = a.objective_y - a.objective_j;
  const double sb = b.objective_y - b.objective_j;
  if (sa != sb) return sa > sb;
  if (a.objective_j != b.objective_j) return a.objective_j < b.objective_j;
  return genome_less(a.genome, b.genome);
}

const Individual& scalarize_select(const std::vector<Individual>& front) {
  if (front.empty()) throw std::invalid_argument("scalarize_select: empty front");
  std::size_t best = 0;
  for (std::size_t i = 1; i < front.size(); ++i)
    if (scalar_better(front[i], front[best])) best = i;
  return front[best];
}

namespace {

void evaluate_all(std::vector<Individual>& pop, std::size_t first, const JointProblemBase& problem, int threads) {
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const Evaluation e = evaluate(pop[i].genome, problem);
      pop[i].objective_y = e.objective_y;
      pop[i].objective_j = e.objective_j;
      pop[i].feasible = e.feasible;
      pop[i].indicators = e.indicators;
    }
  };
  const std::size_t n = pop.size() - first;
  const std::size_t t = std::min<std::size_t>(std::max(threads, 1), std::max<std::size_t>(n, 1));
  if (t <= 1) {
    work(first, pop.size());
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + t - 1) / t;
  for (std::size_t w = 0; w < t; ++w) {
    const std::size_t b = first + w * chunk;
    const std::size_t e = std::min(pop.size(), b + chunk);
    if (b < e) pool.emplace_back(work, b, e);
  }
  for (auto& th : pool) th.join();
}

void rank_and_crowd(std::vector<Individual>& pop, bool additive) {
  for (const auto& front : non_dominated_sort(pop)) {
    const auto c = crowding_distance(pop, front, additive);
    for (std::size_t i = 0; i < front.size(); ++i) pop[front[i]].crowding = c.combined[i];
  }
}

double best_scalar(const std::vector<Individual>& pop) {
  double best = std::numeric_limits<double>::lowest();
  for (const auto& ind : pop)
    if (ind.feasible) best = std::max(best, ind.objective_y - ind.objective_j);
  return best;
}

}  // namespace

ParetoFront evolve(const JointProblemBase& problem, const GaParams& params) {
  params.validate();
  const GenomeShape& shape = problem.shape();
  const ReferencePointSet refs = reference_points(params.divisions);

  std::vector<Individual> pop;
  for (auto& g : problem.seed_genomes()) {
    if (static_cast<int>(pop.size()) >= params.population) break;
    pop.push_back(Individual{std::move(g)});
  }
  {
    Rng rng(derive_seed(params.rng_seed, 0));
    while (static_cast<int>(pop.size()) < params.population) pop.push_back(Individual{random_genome(shape, rng)});
  }
  evaluate_all(pop, 0, problem, params.threads);
  rank_and_crowd(pop, params.additive_crowding);

  ParetoFront out;
  out.best_scalar_per_generation.push_back(best_scalar(pop));

  for (int gen = 1; gen <= params.generations; ++gen) {
    Rng rng(derive_seed(params.rng_seed, gen));
    std::vector<Individual> merged = pop;
    const std::size_t first_child = merged.size();
    while (merged.size() < first_child + static_cast<std::size_t>(params.population)) {
      const Individual& pa = tournament_select(pop, params.tournament_size, rng);
      const Individual& pb = tournament_select(pop, params.tournament_size, rng);
      auto [ca, cb] = crossover_mutate(pa.genome, pb.genome, shape, params, rng);
      merged.push_back(Individual{std::move(ca)});
      merged.push_back(Individual{std::move(cb)});
    }
    evaluate_all(merged, first_child, problem, params.threads);

    const auto fronts = non_dominated_sort(merged);
    std::vector<int> admitted;
    for (const auto& front : fronts) {
      const int room = params.population - static_cast<int>(admitted.size());
      if (room <= 0) break;
      if (static_cast<int>(front.size()) <= room) {
        admitted.insert(admitted.end(), front.begin(), front.end());
      } else {
        const auto picked = niche_select(merged, admitted, front, room, refs, rng);
        admitted.insert(admitted.end(), picked.begin(), picked.end());
      }
    }
    // Elitism on the scalarized objective.
    int elite = 0;
    for (int i = 1; i < static_cast<int>(merged.size()); ++i)
      if (scalar_better(merged[i], merged[elite])) elite = i;
    if (std::find(admitted.begin(), admitted.end(), elite) == admitted.end()) admitted.back() = elite;

    std::vector<Individual> next;
    next.reserve(admitted.size());
    for (int i : admitted) next.push_back(std::move(merged[i]));
    pop = std::move(next);
    rank_and_crowd(pop, params.additive_crowding);
    out.best_scalar_per_generation.push_back(best_scalar(pop));
  }

  for (const auto& ind : pop)
    if (ind.rank == 0) out.members.push_back(ind);
  return out;
}

}  // namespace dynaroute
