#include "modn/optimizers.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <memory>
#include <numeric>
#include <string>

#include "modn/errors.hpp"
#include "modn/gray_code.hpp"
#include "modn/rng.hpp"

namespace modn {

std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::kBbo: return "bbo";
    case Algorithm::kGa: return "ga";
    case Algorithm::kPso: return "pso";
    case Algorithm::kPbil: return "pbil";
    case Algorithm::kEs: return "es";
  }
  return "?";
}

Algorithm parse_algorithm(std::string_view name) {
  std::string s(name);
  for (char& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  for (Algorithm a : {Algorithm::kBbo, Algorithm::kGa, Algorithm::kPso, Algorithm::kPbil, Algorithm::kEs})
    if (s == to_string(a)) return a;
  throw UsageError("unknown optimizer '" + std::string(name) + "'");
}

HeuristicConfig HeuristicConfig::defaults(Algorithm a) {
  HeuristicConfig c;
  c.algorithm = a;
  switch (a) {
    case Algorithm::kBbo:
    case Algorithm::kGa: c.population_size = 100; break;
    case Algorithm::kPso:
    case Algorithm::kPbil: c.population_size = 200; break;
    case Algorithm::kEs: c.population_size = 250; break;
  }
  return c;
}

void HeuristicConfig::validate() const {
  auto probability = [](double p, const char* what) {
    if (!(p >= 0.0 && p <= 1.0)) throw UsageError(std::string(what) + " must lie in [0, 1]");
  };
  if (population_size < 1) throw UsageError("population size must be >= 1");
  if (max_iterations < 1) throw UsageError("iteration budget must be >= 1");
  if (!(search_bounds.hi > search_bounds.lo) || !std::isfinite(search_bounds.width()))
    throw UsageError("search bounds must be a finite interval with hi > lo");
  const Bounds init = effective_init_bounds();
  if (!(init.hi >= init.lo) || init.lo < search_bounds.lo || init.hi > search_bounds.hi)
    throw UsageError("initial bounds must lie inside the search bounds");
  switch (algorithm) {
    case Algorithm::kBbo:
      probability(bbo.modification_probability, "BBO modification probability");
      probability(bbo.mutation_probability, "BBO mutation probability");
      probability(bbo.immigration_bounds.lo, "BBO immigration lower bound");
      probability(bbo.immigration_bounds.hi, "BBO immigration upper bound");
      if (bbo.immigration_bounds.lo > bbo.immigration_bounds.hi)
        throw UsageError("BBO immigration bounds are reversed");
      if (!(bbo.mutation_scale >= 0.0) || !std::isfinite(bbo.mutation_scale))
        throw UsageError("BBO mutation scale must be non-negative");
      if (!(bbo.step_size > 0.0)) throw UsageError("BBO step size must be positive");
      if (!(bbo.max_immigration > 0.0) || !(bbo.max_emigration > 0.0))
        throw UsageError("BBO maximum rates must be positive");
      if (bbo.elites < 0 || bbo.elites >= std::max(population_size, 2))
        throw UsageError("BBO elite count must be below the population size");
      break;
    case Algorithm::kGa:
      probability(ga.crossover_probability, "GA crossover probability");
      probability(ga.mutation_probability, "GA mutation probability");
      if (ga.bits_per_gene < 1 || ga.bits_per_gene > 31) throw UsageError("GA gene width must be in [1, 31]");
      if (ga.elites < 0 || ga.elites >= std::max(population_size, 2))
        throw UsageError("GA elite count must be below the population size");
      break;
    case Algorithm::kPso:
      if (!std::isfinite(pso.inertia) || !std::isfinite(pso.final_inertia) || pso.cognitive < 0.0 ||
          pso.social < 0.0)
        throw UsageError("PSO coefficients must be finite and non-negative");
      break;
    case Algorithm::kPbil:
      probability(pbil.learning_rate, "PBIL learning rate");
      probability(pbil.negative_learning_rate, "PBIL negative learning rate");
      if (pbil.bits_per_gene < 1 || pbil.bits_per_gene > 31) throw UsageError("PBIL gene width must be in [1, 31]");
      if (pbil.best_individuals < 1 || pbil.best_individuals > population_size)
        throw UsageError("PBIL best-individual count must be in [1, population]");
      if (pbil.bad_populations < 0) throw UsageError("PBIL bad population count must be >= 0");
      break;
    case Algorithm::kEs:
      if (!(es.global_variance >= 0.0) || !std::isfinite(es.global_variance))
        throw UsageError("ES variance must be finite and non-negative");
      if (es.new_individuals < 1) throw UsageError("ES needs at least one new individual per generation");
      break;
  }
}

int default_iterations(std::string_view dataset_name) {
  const DatasetDescriptor* d = find_dataset(dataset_name);
  return d ? d->iterations : 400;
}

void TwoStepSchedule::validate() const {
  if (block_generations < 1) throw UsageError("two-step block length must be >= 1");
}

GeneBlock TwoStepSchedule::phase_at(int generation) const {
  const bool flipped = (generation / block_generations) % 2 == 1;
  if (!flipped) return start_phase;
  return start_phase == GeneBlock::kContinuous ? GeneBlock::kFilter : GeneBlock::kContinuous;
}

namespace {

std::vector<std::size_t> rank_order(const std::vector<Candidate>& pop) {
  std::vector<std::size_t> order(pop.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return pop[a].fitness < pop[b].fitness; });
  return order;
}

double sanitize(double f) { return std::isfinite(f) ? f : std::numeric_limits<double>::max(); }

// Shared state and helpers. Each engine keeps pop_ current after every step.
class Engine {
 public:
  Engine(const CandidateFitness& fitness, const SearchSpace& space, const HeuristicConfig& config,
         std::uint64_t seed)
      : fitness_(fitness), space_(space), config_(config), rng_(seed) {}
  virtual ~Engine() = default;

  virtual void initialize() = 0;
  virtual void step(GeneBlock block) = 0;

  const std::vector<Candidate>& population() const { return pop_; }
  const Candidate& best() const { return best_; }

 protected:
  void evaluate(Candidate& c) {
    c.fitness = sanitize(fitness_(c));
    if (c.fitness < best_.fitness) best_ = c;
  }

  double clamp(double x) const {
    return std::clamp(x, config_.search_bounds.lo, config_.search_bounds.hi);
  }

  std::vector<double> random_continuous() {
    const Bounds b = config_.effective_init_bounds();
    std::vector<double> g(space_.continuous_dim);
    for (double& x : g) x = rng_.uniform(b.lo, b.hi);
    return g;
  }

  // Every row gets at least one bit: inoperative dendrites are excluded.
  std::vector<std::uint8_t> random_filter() {
    std::vector<std::uint8_t> bits(space_.filter_bits());
    const auto cols = static_cast<std::size_t>(space_.filter_cols);
    for (std::size_t r = 0; r < static_cast<std::size_t>(space_.filter_rows); ++r) {
      bool any = false;
      while (!any) {
        for (std::size_t c = 0; c < cols; ++c) {
          bits[r * cols + c] = rng_.bernoulli(0.5) ? 1 : 0;
          any = any || bits[r * cols + c];
        }
      }
    }
    return bits;
  }

  // An emptied row gets one random bit back.
  void repair_filter(std::span<std::uint8_t> bits) {
    const auto cols = static_cast<std::size_t>(space_.filter_cols);
    for (std::size_t r = 0; r < static_cast<std::size_t>(space_.filter_rows); ++r) {
      auto row = bits.subspan(r * cols, cols);
      if (std::none_of(row.begin(), row.end(), [](std::uint8_t b) { return b != 0; }))
        row[rng_.index(cols)] = 1;
    }
  }

  // Real-coded filter: threshold at 0.5, an empty row keeps its largest entry.
  std::vector<std::uint8_t> threshold_filter(const std::vector<double>& reals) const {
    std::vector<std::uint8_t> bits(reals.size());
    const auto cols = static_cast<std::size_t>(space_.filter_cols);
    for (std::size_t r = 0; r < static_cast<std::size_t>(space_.filter_rows); ++r) {
      bool any = false;
      std::size_t top = 0;
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t k = r * cols + c;
        bits[k] = reals[k] >= 0.5 ? 1 : 0;
        any = any || bits[k];
        if (reals[k] > reals[r * cols + top]) top = c;
      }
      if (!any) bits[r * cols + top] = 1;
    }
    return bits;
  }

  std::vector<double> random_filter_reals() {
    std::vector<double> reals(space_.filter_bits());
    const std::vector<std::uint8_t> bits = random_filter();
    // Start each real on the side of 0.5 its sampled bit says.
    for (std::size_t k = 0; k < reals.size(); ++k)
      reals[k] = bits[k] ? rng_.uniform(0.5, 1.0) : rng_.uniform(0.0, 0.5);
    return reals;
  }

  std::size_t block_size(GeneBlock block) const {
    return block == GeneBlock::kFilter ? space_.filter_bits() : space_.continuous_dim;
  }

  const CandidateFitness& fitness_;
  SearchSpace space_;
  HeuristicConfig config_;
  Rng rng_;
  std::vector<Candidate> pop_;
  Candidate best_;
};

// ---------------------------------------------------------------------------
// Biogeography-based optimisation.

class BboEngine final : public Engine {
 public:
  using Engine::Engine;

  void initialize() override {
    const auto n = static_cast<std::size_t>(config_.population_size);
    pop_.resize(n);
    for (Candidate& c : pop_) {
      c.continuous_genes = random_continuous();
      if (space_.has_filter()) c.filter_genes = random_filter();
      evaluate(c);
    }
    prob_.assign(n, 1.0 / static_cast<double>(n));
    sort_population();
  }

  void step(GeneBlock block) override {
    const BboParams& p = config_.bbo;
    const std::size_t n = pop_.size();
    const auto nd = static_cast<double>(n);
    const std::size_t genes = block_size(block);

    // pop_ is sorted best first. Rank k has emigration mu_k and immigration lambda_k.
    std::vector<double> mu(n), lambda(n);
    for (std::size_t k = 0; k < n; ++k) {
      mu[k] = p.max_emigration * (nd - static_cast<double>(k)) / (nd + 1.0);
      lambda[k] = p.max_immigration * (1.0 - (nd - static_cast<double>(k)) / (nd + 1.0));
    }
    update_species_probabilities();
    const double lambda_min = *std::min_element(lambda.begin(), lambda.end());
    const double lambda_max = *std::max_element(lambda.begin(), lambda.end());
    const double mu_sum = std::accumulate(mu.begin(), mu.end(), 0.0);

    std::vector<Candidate> elites(pop_.begin(), pop_.begin() + static_cast<std::ptrdiff_t>(
                                                                   std::min<std::size_t>(p.elites, n)));

    std::vector<Candidate> next = pop_;
    std::vector<bool> changed(n, false);
    for (std::size_t k = 0; k < n; ++k) {
      if (!rng_.bernoulli(p.modification_probability)) continue;
      const double scale =
          lambda_max > lambda_min ? (lambda[k] - lambda_min) / (lambda_max - lambda_min) : 0.0;
      const double immigration =
          p.immigration_bounds.lo + (p.immigration_bounds.hi - p.immigration_bounds.lo) * scale;
      for (std::size_t g = 0; g < genes; ++g) {
        if (!rng_.bernoulli(immigration)) continue;
        const std::size_t src = roulette(mu, mu_sum);
        if (copy_gene(pop_[src], next[k], block, g)) changed[k] = true;
      }
    }

    // Mutation on the worse half, scaled by how unlikely each rank's species count is.
    const double prob_max = *std::max_element(prob_.begin(), prob_.end());
    for (std::size_t k = n / 2; k < n; ++k) {
      const double rate = n == 1 ? p.mutation_probability
                                 : p.mutation_probability * (1.0 - prob_[k] / prob_max);
      for (std::size_t g = 0; g < genes; ++g) {
        if (!rng_.bernoulli(rate)) continue;
        mutate_gene(next[k], block, g);
        changed[k] = true;
      }
    }

    for (std::size_t k = 0; k < n; ++k) {
      if (!changed[k]) continue;
      if (block == GeneBlock::kFilter) repair_filter(next[k].filter_genes);
      evaluate(next[k]);
    }
    pop_ = std::move(next);
    sort_population();

    // Elitism: the previous best replaces the worst when the new best is worse.
    for (std::size_t e = 0; e < elites.size(); ++e) {
      if (pop_[e].fitness <= elites[e].fitness) continue;
      pop_[n - 1 - e] = elites[e];
    }
    sort_population();
  }

 private:
  void sort_population() {
    const auto order = rank_order(pop_);
    std::vector<Candidate> sorted;
    sorted.reserve(pop_.size());
    for (std::size_t i : order) sorted.push_back(std::move(pop_[i]));
    pop_ = std::move(sorted);
  }

  // Birth-death chain over species counts. Rank k holds s = n - k species,
  // with lambda(s) = I (1 - s / (n + 1)) and mu(s) = E s / (n + 1).
  void update_species_probabilities() {
    const std::size_t n = prob_.size();
    const auto nd = static_cast<double>(n);
    const BboParams& p = config_.bbo;
    auto lambda_of = [&](double sp) { return p.max_immigration * (1.0 - sp / (nd + 1.0)); };
    auto mu_of = [&](double sp) { return p.max_emigration * sp / (nd + 1.0); };
    std::vector<double> dot(n);
    for (std::size_t k = 0; k < n; ++k) {
      const double sp = nd - static_cast<double>(k);
      const double fewer = k + 1 < n ? prob_[k + 1] : 0.0;  // s - 1
      const double more = k > 0 ? prob_[k - 1] : 0.0;       // s + 1
      dot[k] = -(lambda_of(sp) + mu_of(sp)) * prob_[k] + lambda_of(sp - 1.0) * fewer +
               mu_of(sp + 1.0) * more;
    }
    double total = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      prob_[k] = std::max(0.0, prob_[k] + dot[k] * p.step_size);
      total += prob_[k];
    }
    if (total > 0.0)
      for (double& v : prob_) v /= total;
    else
      prob_.assign(n, 1.0 / nd);
  }

  std::size_t roulette(const std::vector<double>& weights, double total) {
    double r = rng_.uniform() * total;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (r < weights[i]) return i;
      r -= weights[i];
    }
    return weights.size() - 1;
  }

  static bool copy_gene(const Candidate& from, Candidate& to, GeneBlock block, std::size_t g) {
    if (block == GeneBlock::kFilter) {
      const bool diff = to.filter_genes[g] != from.filter_genes[g];
      to.filter_genes[g] = from.filter_genes[g];
      return diff;
    }
    const bool diff = to.continuous_genes[g] != from.continuous_genes[g];
    to.continuous_genes[g] = from.continuous_genes[g];
    return diff;
  }

  void mutate_gene(Candidate& c, GeneBlock block, std::size_t g) {
    if (block == GeneBlock::kFilter)
      c.filter_genes[g] ^= 1;
    else
      c.continuous_genes[g] = mutated(c.continuous_genes[g]);
  }

  double mutated(double x) {
    const double sigma = config_.bbo.mutation_scale * config_.search_bounds.width();
    if (sigma == 0.0) return rng_.uniform(config_.search_bounds.lo, config_.search_bounds.hi);
    return clamp(x + rng_.normal() * sigma);
  }

  std::vector<double> prob_;
};

// ---------------------------------------------------------------------------
// Bit-string genome shared by GA and PBIL: gray-coded real genes, then the
// raw filter bits.

class BitGenome {
 public:
  BitGenome(const SearchSpace& space, const Bounds& bounds, int bits_per_gene)
      : codec_(bounds.lo, bounds.hi, bits_per_gene),
        width_(static_cast<std::size_t>(bits_per_gene)),
        continuous_bits_(space.continuous_dim * width_),
        total_(continuous_bits_ + space.filter_bits()) {}

  std::size_t total() const { return total_; }
  std::size_t begin(GeneBlock b) const { return b == GeneBlock::kFilter ? continuous_bits_ : 0; }
  std::size_t end(GeneBlock b) const { return b == GeneBlock::kFilter ? total_ : continuous_bits_; }

  void encode(const Candidate& c, std::span<std::uint8_t> out) const {
    for (std::size_t g = 0; g < c.continuous_genes.size(); ++g)
      codec_.encode(c.continuous_genes[g], out.subspan(g * width_, width_));
    std::copy(c.filter_genes.begin(), c.filter_genes.end(), out.begin() + static_cast<std::ptrdiff_t>(continuous_bits_));
  }

  void decode(std::span<const std::uint8_t> bits, Candidate& c) const {
    const std::size_t dim = continuous_bits_ / width_;
    c.continuous_genes.resize(dim);
    for (std::size_t g = 0; g < dim; ++g) c.continuous_genes[g] = codec_.decode(bits.subspan(g * width_, width_));
    c.filter_genes.assign(bits.begin() + static_cast<std::ptrdiff_t>(continuous_bits_), bits.end());
  }

  std::span<std::uint8_t> filter_part(std::span<std::uint8_t> bits) const {
    return bits.subspan(continuous_bits_);
  }

 private:
  GrayCodec codec_;
  std::size_t width_;
  std::size_t continuous_bits_;
  std::size_t total_;
};

// ---------------------------------------------------------------------------
// Genetic algorithm on gray-coded chromosomes.

class GaEngine final : public Engine {
 public:
  GaEngine(const CandidateFitness& fitness, const SearchSpace& space, const HeuristicConfig& config,
           std::uint64_t seed)
      : Engine(fitness, space, config, seed),
        genome_(space, config.search_bounds, config.ga.bits_per_gene) {}

  void initialize() override {
    const auto n = static_cast<std::size_t>(config_.population_size);
    pop_.resize(n);
    chrom_.assign(n, std::vector<std::uint8_t>(genome_.total()));
    for (std::size_t i = 0; i < n; ++i) {
      Candidate seed_candidate;
      seed_candidate.continuous_genes = random_continuous();
      if (space_.has_filter()) seed_candidate.filter_genes = random_filter();
      genome_.encode(seed_candidate, chrom_[i]);
      genome_.decode(chrom_[i], pop_[i]);
      evaluate(pop_[i]);
    }
  }

  void step(GeneBlock block) override {
    const GaParams& p = config_.ga;
    const std::size_t n = pop_.size();
    const auto order = rank_order(pop_);

    // Linear ranking, selection pressure 2: best 2, worst 0.
    std::vector<double> weight(n, 1.0);
    if (n > 1)
      for (std::size_t r = 0; r < n; ++r)
        weight[order[r]] = 2.0 * static_cast<double>(n - 1 - r) / static_cast<double>(n - 1);
    const double total = std::accumulate(weight.begin(), weight.end(), 0.0);

    const std::size_t elites = std::min<std::size_t>(static_cast<std::size_t>(p.elites), n);
    std::vector<std::vector<std::uint8_t>> next_chrom;
    std::vector<Candidate> next_pop;
    next_chrom.reserve(n);
    next_pop.reserve(n);
    for (std::size_t e = 0; e < elites; ++e) {
      next_chrom.push_back(chrom_[order[e]]);
      next_pop.push_back(pop_[order[e]]);
    }

    const std::size_t lo = genome_.begin(block), hi = genome_.end(block);
    while (next_pop.size() < n) {
      auto a = chrom_[select(weight, total)];
      auto b = chrom_[select(weight, total)];
      if (hi - lo >= 2 && rng_.bernoulli(p.crossover_probability)) {
        std::size_t c1 = lo + rng_.index(hi - lo), c2 = lo + rng_.index(hi - lo);
        if (c1 > c2) std::swap(c1, c2);
        std::swap_ranges(a.begin() + static_cast<std::ptrdiff_t>(c1),
                         a.begin() + static_cast<std::ptrdiff_t>(c2 + 1),
                         b.begin() + static_cast<std::ptrdiff_t>(c1));
      }
      for (auto* child : {&a, &b}) {
        if (next_pop.size() >= n) break;
        for (std::size_t k = lo; k < hi; ++k)
          if (rng_.bernoulli(p.mutation_probability)) (*child)[k] ^= 1;
        if (block == GeneBlock::kFilter) repair_filter(genome_.filter_part(*child));
        Candidate c;
        genome_.decode(*child, c);
        evaluate(c);
        next_chrom.push_back(std::move(*child));
        next_pop.push_back(std::move(c));
      }
    }
    chrom_ = std::move(next_chrom);
    pop_ = std::move(next_pop);
  }

 private:
  std::size_t select(const std::vector<double>& weight, double total) {
    if (!(total > 0.0)) return rng_.index(weight.size());
    double r = rng_.uniform() * total;
    for (std::size_t i = 0; i < weight.size(); ++i) {
      if (r < weight[i]) return i;
      r -= weight[i];
    }
    return weight.size() - 1;
  }

  BitGenome genome_;
  std::vector<std::vector<std::uint8_t>> chrom_;
};

// ---------------------------------------------------------------------------
// Particle swarm; filter bits move as reals in [0, 1].

class PsoEngine final : public Engine {
 public:
  using Engine::Engine;

  void initialize() override {
    const auto n = static_cast<std::size_t>(config_.population_size);
    pop_.resize(n);
    x_.resize(n);
    v_.assign(n, std::vector<double>(space_.continuous_dim, 0.0));
    fx_.resize(n);
    fv_.assign(n, std::vector<double>(space_.filter_bits(), 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      x_[i] = random_continuous();
      if (space_.has_filter()) fx_[i] = random_filter_reals();
      sync(i);
      evaluate(pop_[i]);
    }
    pbest_ = pop_;
    pbest_x_ = x_;
    pbest_fx_ = fx_;
    update_global();
  }

  void step(GeneBlock block) override {
    const PsoParams& p = config_.pso;
    const std::size_t n = pop_.size();
    const bool filter = block == GeneBlock::kFilter;
    const double vmax = filter ? 1.0 : config_.search_bounds.width();
    // Inertia falls linearly from p.inertia to p.final_inertia over the run.
    const double frac = static_cast<double>(generation_++) / std::max(1, config_.max_iterations - 1);
    const double w = p.inertia + (p.final_inertia - p.inertia) * std::min(frac, 1.0);
    const double lo = filter ? 0.0 : config_.search_bounds.lo;
    const double hi = filter ? 1.0 : config_.search_bounds.hi;
    for (std::size_t i = 0; i < n; ++i) {
      auto& x = filter ? fx_[i] : x_[i];
      auto& v = filter ? fv_[i] : v_[i];
      const auto& pb = filter ? pbest_fx_[i] : pbest_x_[i];
      const auto& gb = filter ? gbest_fx_ : gbest_x_;
      for (std::size_t d = 0; d < x.size(); ++d) {
        const double r1 = rng_.uniform(), r2 = rng_.uniform();
        v[d] = w * v[d] + p.cognitive * r1 * (pb[d] - x[d]) + p.social * r2 * (gb[d] - x[d]);
        v[d] = std::clamp(v[d], -vmax, vmax);
        x[d] += v[d];
        if (x[d] < lo || x[d] > hi) {
          x[d] = std::clamp(x[d], lo, hi);
          v[d] = 0.0;
        }
      }
      sync(i);
      evaluate(pop_[i]);
      if (pop_[i].fitness < pbest_[i].fitness) {
        pbest_[i] = pop_[i];
        pbest_x_[i] = x_[i];
        pbest_fx_[i] = fx_[i];
      }
    }
    update_global();
  }

 private:
  void sync(std::size_t i) {
    pop_[i].continuous_genes = x_[i];
    if (space_.has_filter()) pop_[i].filter_genes = threshold_filter(fx_[i]);
  }

  void update_global() {
    std::size_t g = 0;
    for (std::size_t i = 1; i < pbest_.size(); ++i)
      if (pbest_[i].fitness < pbest_[g].fitness) g = i;
    if (gbest_x_.empty() || pbest_[g].fitness < gbest_fitness_) {
      gbest_fitness_ = pbest_[g].fitness;
      gbest_x_ = pbest_x_[g];
      gbest_fx_ = pbest_fx_[g];
    }
  }

  int generation_ = 0;
  std::vector<std::vector<double>> x_, v_, fx_, fv_;
  std::vector<Candidate> pbest_;
  std::vector<std::vector<double>> pbest_x_, pbest_fx_;
  std::vector<double> gbest_x_, gbest_fx_;
  double gbest_fitness_ = std::numeric_limits<double>::infinity();
};

// ---------------------------------------------------------------------------
// Population-based incremental learning over the bit genome.

class PbilEngine final : public Engine {
 public:
  PbilEngine(const CandidateFitness& fitness, const SearchSpace& space, const HeuristicConfig& config,
             std::uint64_t seed, bool raw_bits)
      : Engine(fitness, space, config, seed),
        genome_(space, config.search_bounds, config.pbil.bits_per_gene),
        raw_bits_(raw_bits) {}

  void initialize() override {
    prob_.assign(genome_.total(), 0.5);
    best_bits_.assign(genome_.total(), 0);
    sample_generation(GeneBlock::kContinuous, true);
  }

  void step(GeneBlock block) override {
    sample_generation(block, false);
    const PbilParams& p = config_.pbil;
    const auto order = rank_order(pop_);
    const std::size_t lo = genome_.begin(block), hi = genome_.end(block);
    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(p.best_individuals), order.size());
    for (std::size_t b = 0; b < take; ++b) {
      const auto& bits = bits_[order[b]];
      for (std::size_t k = lo; k < hi; ++k)
        prob_[k] = prob_[k] * (1.0 - p.learning_rate) + p.learning_rate * bits[k];
    }
    // Move away from the worst sample where it disagrees with the best.
    const auto& best_bits = bits_[order.front()];
    const auto& worst_bits = bits_[order.back()];
    for (std::size_t k = lo; k < hi; ++k)
      if (best_bits[k] != worst_bits[k])
        prob_[k] = prob_[k] * (1.0 - p.negative_learning_rate) + p.negative_learning_rate * best_bits[k];
    for (double& q : prob_) q = std::clamp(q, 0.0, 1.0);
  }

  const std::vector<double>& probabilities() const { return prob_; }

 private:
  // Active bits come from the probability vector, the frozen block from the
  // best genome so far. The first generation samples every bit.
  void sample_generation(GeneBlock block, bool all) {
    const auto n = static_cast<std::size_t>(config_.population_size);
    const std::size_t lo = all ? 0 : genome_.begin(block), hi = all ? genome_.total() : genome_.end(block);
    pop_.resize(n);
    bits_.assign(n, best_bits_);
    for (std::size_t i = 0; i < n; ++i) {
      auto& bits = bits_[i];
      for (std::size_t k = lo; k < hi; ++k) bits[k] = rng_.bernoulli(prob_[k]) ? 1 : 0;
      if (!raw_bits_ && space_.has_filter() && (all || block == GeneBlock::kFilter))
        repair_filter(genome_.filter_part(bits));
      if (raw_bits_) {
        pop_[i].continuous_genes.clear();
        pop_[i].filter_genes = bits;
      } else {
        genome_.decode(bits, pop_[i]);
      }
      const double before = best_.fitness;
      evaluate(pop_[i]);
      if (best_.fitness < before) best_bits_ = bits;
    }
  }

  BitGenome genome_;
  bool raw_bits_;
  std::vector<double> prob_;
  std::vector<std::vector<std::uint8_t>> bits_;
  std::vector<std::uint8_t> best_bits_;
};

// ---------------------------------------------------------------------------
// (mu + lambda) evolution strategy with a shared step size per gene block,
// adapted by the 1/5 success rule. Filter bits move as reals in [0, 1].

class EsEngine final : public Engine {
 public:
  using Engine::Engine;

  void initialize() override {
    const auto n = static_cast<std::size_t>(config_.population_size);
    pop_.resize(n);
    fx_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      pop_[i].continuous_genes = random_continuous();
      if (space_.has_filter()) {
        fx_[i] = random_filter_reals();
        pop_[i].filter_genes = threshold_filter(fx_[i]);
      }
      evaluate(pop_[i]);
    }
    sigma_continuous_ = sigma_filter_ = std::sqrt(config_.es.global_variance);
  }

  void step(GeneBlock block) override {
    const std::size_t mu = pop_.size();
    const auto lambda = static_cast<std::size_t>(config_.es.new_individuals);
    const bool filter = block == GeneBlock::kFilter;
    double& sigma = filter ? sigma_filter_ : sigma_continuous_;

    std::vector<Candidate> merged = pop_;
    std::vector<std::vector<double>> merged_fx = fx_;
    std::size_t successes = 0;
    for (std::size_t k = 0; k < lambda; ++k) {
      const std::size_t parent = rng_.index(mu);
      Candidate child = pop_[parent];
      std::vector<double> child_fx = fx_[parent];
      if (filter) {
        for (double& r : child_fx) r = std::clamp(r + sigma * rng_.normal(), 0.0, 1.0);
        child.filter_genes = threshold_filter(child_fx);
      } else {
        for (double& x : child.continuous_genes) x = clamp(x + sigma * rng_.normal());
      }
      evaluate(child);
      if (child.fitness < pop_[parent].fitness) ++successes;
      merged.push_back(std::move(child));
      merged_fx.push_back(std::move(child_fx));
    }

    // Plus selection; incumbents win ties (stable order).
    const auto order = rank_order(merged);
    for (std::size_t i = 0; i < mu; ++i) {
      pop_[i] = std::move(merged[order[i]]);
      fx_[i] = std::move(merged_fx[order[i]]);
    }

    constexpr double kTarget = 0.2, kFactor = 0.82;
    const double rate = static_cast<double>(successes) / static_cast<double>(lambda);
    if (rate > kTarget) sigma /= kFactor;
    else if (rate < kTarget) sigma *= kFactor;
  }

 private:
  std::vector<std::vector<double>> fx_;
  double sigma_continuous_ = 1.0;
  double sigma_filter_ = 1.0;
};

std::unique_ptr<Engine> make_engine(const CandidateFitness& fitness, const SearchSpace& space,
                                    const HeuristicConfig& config, std::uint64_t seed) {
  switch (config.algorithm) {
    case Algorithm::kBbo: return std::make_unique<BboEngine>(fitness, space, config, seed);
    case Algorithm::kGa: return std::make_unique<GaEngine>(fitness, space, config, seed);
    case Algorithm::kPso: return std::make_unique<PsoEngine>(fitness, space, config, seed);
    case Algorithm::kPbil: return std::make_unique<PbilEngine>(fitness, space, config, seed, false);
    case Algorithm::kEs: return std::make_unique<EsEngine>(fitness, space, config, seed);
  }
  throw UsageError("unknown optimizer");
}

TrainingLog drive(Engine& engine, const SearchSpace& space, const HeuristicConfig& config,
                  const SearchOptions& options) {
  using Clock = std::chrono::steady_clock;
  TrainingLog log;
  const auto r = static_cast<std::size_t>(config.max_iterations);
  log.best_fitness.reserve(r);
  log.iteration_seconds.reserve(r);
  engine.initialize();
  for (int g = 0; g < config.max_iterations; ++g) {
    GeneBlock block = GeneBlock::kContinuous;
    if (space.continuous_dim == 0) block = GeneBlock::kFilter;
    else if (space.has_filter() && options.schedule) block = options.schedule->phase_at(g);
    const auto t0 = Clock::now();
    engine.step(block);
    log.iteration_seconds.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
    log.best_fitness.push_back(engine.best().fitness);
    if (options.observer) options.observer(g, block, engine.population());
  }
  log.best = engine.best();
  return log;
}

void check_space(const SearchSpace& space) {
  if (space.continuous_dim == 0 && !space.has_filter()) throw UsageError("search space is empty");
  if ((space.filter_rows > 0) != (space.filter_cols > 0)) throw UsageError("filter block needs both M and C");
}

TrainingLog run_named(Algorithm expected, const ObjectiveFunction& f, std::size_t dim,
                      const HeuristicConfig& config, std::uint64_t seed) {
  if (config.algorithm != expected)
    throw UsageError("config names " + std::string(to_string(config.algorithm)) + ", expected " +
                     std::string(to_string(expected)));
  if (dim == 0) throw UsageError("objective dimension must be >= 1");
  const CandidateFitness wrapped = [&f](const Candidate& c) { return f(c.continuous_genes); };
  return search(wrapped, SearchSpace{dim, 0, 0}, config, seed);
}

}  // namespace

TrainingLog search(const CandidateFitness& fitness, const SearchSpace& space,
                   const HeuristicConfig& config, std::uint64_t seed, const SearchOptions& options) {
  config.validate();
  check_space(space);
  if (options.schedule) options.schedule->validate();
  auto engine = make_engine(fitness, space, config, seed);
  return drive(*engine, space, config, options);
}

TrainingLog run_bbo(const ObjectiveFunction& f, std::size_t dim, const HeuristicConfig& config,
                    std::uint64_t seed) {
  return run_named(Algorithm::kBbo, f, dim, config, seed);
}

TrainingLog run_ga(const ObjectiveFunction& f, std::size_t dim, const HeuristicConfig& config,
                   std::uint64_t seed) {
  return run_named(Algorithm::kGa, f, dim, config, seed);
}

TrainingLog run_pso(const ObjectiveFunction& f, std::size_t dim, const HeuristicConfig& config,
                    std::uint64_t seed) {
  return run_named(Algorithm::kPso, f, dim, config, seed);
}

TrainingLog run_pbil(const ObjectiveFunction& f, std::size_t dim, const HeuristicConfig& config,
                     std::uint64_t seed) {
  return run_named(Algorithm::kPbil, f, dim, config, seed);
}

TrainingLog run_es(const ObjectiveFunction& f, std::size_t dim, const HeuristicConfig& config,
                   std::uint64_t seed) {
  return run_named(Algorithm::kEs, f, dim, config, seed);
}

PbilBitsResult run_pbil_bits(const BitObjective& f, std::size_t bits, const HeuristicConfig& config,
                             std::uint64_t seed) {
  if (config.algorithm != Algorithm::kPbil) throw UsageError("run_pbil_bits needs a PBIL config");
  if (bits == 0) throw UsageError("bit objective needs at least one bit");
  config.validate();
  // The bits ride in the filter block as a 1 x bits row, sampled without row repair.
  const CandidateFitness wrapped = [&f](const Candidate& c) { return f(c.filter_genes); };
  const SearchSpace space{0, 1, static_cast<Index>(bits)};
  PbilEngine engine(wrapped, space, config, seed, true);
  PbilBitsResult result;
  result.log = drive(engine, space, config, {});
  result.probabilities = engine.probabilities();
  return result;
}

// ---------------------------------------------------------------------------
// Model training.

FitnessEvaluator::FitnessEvaluator(const LabeledDataset& train, ModelConfig config)
    : evaluator_(std::move(config), train.features, train.labels) {
  if (evaluator_.config().variant != Variant::kModn) fixed_filter_ = default_filter(evaluator_.config());
  if (evaluator_.config().class_count() != train.class_count())
    throw ShapeError("model class count " + std::to_string(evaluator_.config().class_count()) +
                     " does not match the dataset's " + std::to_string(train.class_count()));
}

SearchSpace FitnessEvaluator::search_space() const {
  const ModelConfig& c = config();
  SearchSpace s;
  s.continuous_dim = static_cast<std::size_t>(c.continuous_gene_count());
  if (c.variant == Variant::kModn) {
    s.filter_rows = c.dendrite_count;
    s.filter_cols = c.output_dim;
  }
  return s;
}

ModelParams FitnessEvaluator::params_of(const Candidate& c) const {
  if (static_cast<Index>(c.continuous_genes.size()) != config().continuous_gene_count())
    throw UsageError("candidate has " + std::to_string(c.continuous_genes.size()) +
                     " real genes, the model needs " + std::to_string(config().continuous_gene_count()));
  return ModelParams::from_genes(config(), c.continuous_genes);
}

PreferenceFilter FitnessEvaluator::filter_of(const Candidate& c) const {
  if (fixed_filter_) return *fixed_filter_;
  if (static_cast<Index>(c.filter_genes.size()) != config().filter_bit_count())
    throw UsageError("candidate has " + std::to_string(c.filter_genes.size()) +
                     " filter bits, the model needs " + std::to_string(config().filter_bit_count()));
  return PreferenceFilter::from_bits(config().dendrite_count, config().output_dim, c.filter_genes);
}

double FitnessEvaluator::operator()(const Candidate& c) const {
  if (static_cast<Index>(c.continuous_genes.size()) != config().continuous_gene_count())
    throw UsageError("candidate real-gene count does not match the model");
  return evaluator_.loss(c.continuous_genes, filter_of(c));
}

double evaluate_fitness(const Candidate& candidate, const LabeledDataset& train,
                        const ModelConfig& config) {
  return FitnessEvaluator(train, config)(candidate);
}

namespace {

TrainedModel finish(const FitnessEvaluator& fitness, TrainingLog log) {
  TrainedModel m;
  m.params = fitness.params_of(log.best);
  m.filter = fitness.filter_of(log.best);
  m.log = std::move(log);
  return m;
}

}  // namespace

TrainedModel train_modn_two_step(const LabeledDataset& train, const ModelConfig& config,
                                 const HeuristicConfig& heuristic, const TwoStepSchedule& schedule,
                                 std::uint64_t seed, const GenerationObserver& observer) {
  if (config.variant != Variant::kModn) throw UsageError("the two-step scheme is for MODN only");
  schedule.validate();
  const FitnessEvaluator fitness(train, config);
  const CandidateFitness f = [&fitness](const Candidate& c) { return fitness(c); };
  SearchOptions options;
  options.schedule = schedule;
  options.observer = observer;
  return finish(fitness, search(f, fitness.search_space(), heuristic, seed, options));
}

TrainedModel train_heuristic(const LabeledDataset& train, const ModelConfig& config,
                             const HeuristicConfig& heuristic, std::uint64_t seed,
                             const TwoStepSchedule& schedule) {
  if (config.variant == Variant::kModn)
    return train_modn_two_step(train, config, heuristic, schedule, seed);
  const FitnessEvaluator fitness(train, config);
  const CandidateFitness f = [&fitness](const Candidate& c) { return fitness(c); };
  return finish(fitness, search(f, fitness.search_space(), heuristic, seed));
}

TrainedModel train_bp(const LabeledDataset& train, const ModelConfig& config, const BpConfig& bp,
                      std::uint64_t seed, Bounds init, std::optional<PreferenceFilter> filter) {
  config.validate();
  bp.validate();
  if (config.variant == Variant::kDnm) throw UsageError("BP training covers the telodendron models only");
  if (!filter) {
    if (config.variant == Variant::kModn)
      throw UsageError("BP cannot learn the MODN filter; pass a frozen filter");
    filter = default_filter(config);
  }
  if (!(init.hi >= init.lo)) throw UsageError("BP initial bounds are reversed");

  const BatchEvaluator evaluator(config, train.features, train.labels);
  Rng rng(seed);
  ModelParams params = ModelParams::random(config, rng, init.lo, init.hi);

  // BP is not elitist: the log holds the loss after each step and the
  // candidate is the final point, not the best seen.
  using Clock = std::chrono::steady_clock;
  TrainingLog log;
  for (int it = 0; it < bp.max_iterations; ++it) {
    const auto t0 = Clock::now();
    params = bp_step(params, train.features, train.one_hot, *filter, config, bp);
    log.iteration_seconds.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
    log.best_fitness.push_back(sanitize(evaluator.loss(params, *filter)));
  }

  TrainedModel m;
  m.params = params;
  m.filter = *filter;
  log.best.continuous_genes = params.to_genes();
  if (config.variant == Variant::kModn) log.best.filter_genes = filter->bits();
  log.best.fitness = log.best_fitness.back();
  m.log = std::move(log);
  return m;
}

}  // namespace modn
