#pragma once

// Population metaheuristics over a mixed genome (real genes plus an optional
// M x C filter bit block) and the model-training entry points built on them.

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "modn/data.hpp"
#include "modn/gradients.hpp"
#include "modn/model.hpp"

namespace modn {

enum class Algorithm { kBbo, kGa, kPso, kPbil, kEs };

std::string_view to_string(Algorithm a);
/// "bbo", "ga", "pso", "pbil", "es" (case-insensitive).
Algorithm parse_algorithm(std::string_view name);

struct Bounds {
  double lo = -10.0;
  double hi = 10.0;

  double width() const { return hi - lo; }
};

struct BboParams {
  double modification_probability = 1.0;
  Bounds immigration_bounds{0.0, 1.0};
  double step_size = 1.0;  // species-probability integration step
  double max_immigration = 1.0;
  double max_emigration = 1.0;
  double mutation_probability = 0.1;
  /// Gaussian mutation step as a fraction of the search width; 0 resets
  /// the gene uniformly instead.
  double mutation_scale = 0.02;
  int elites = 1;
};

struct GaParams {
  int bits_per_gene = 16;
  double crossover_probability = 1.0;
  double mutation_probability = 0.01;
  int elites = 1;
};

struct PsoParams {
  double inertia = 1.0;
  double final_inertia = 0.4;  // equal to inertia for a constant weight
  double cognitive = 0.3;
  double social = 0.3;
};

struct PbilParams {
  int bits_per_gene = 16;
  double learning_rate = 0.05;
  double negative_learning_rate = 0.05;
  int best_individuals = 1;
  int bad_populations = 0;
};

struct EsParams {
  double global_variance = 1.0;
  int new_individuals = 10;
};

struct HeuristicConfig {
  Algorithm algorithm = Algorithm::kBbo;
  int population_size = 100;
  int max_iterations = 300;
  Bounds search_bounds{-10.0, 10.0};
  /// Initial sampling box for real genes; the search bounds when unset.
  std::optional<Bounds> init_bounds;
  BboParams bbo;
  GaParams ga;
  PsoParams pso;
  PbilParams pbil;
  EsParams es;

  /// Published per-algorithm defaults (population 100/100/200/200/250).
  static HeuristicConfig defaults(Algorithm a);
  Bounds effective_init_bounds() const { return init_bounds.value_or(search_bounds); }
  void validate() const;
};

/// Generation budget by dataset: 300 for breast, blood, wine, car and iris,
/// 400 for the rest (and for unknown names).
int default_iterations(std::string_view dataset_name);

enum class GeneBlock { kContinuous, kFilter };

/// Alternation between the parameter block and the filter block.
struct TwoStepSchedule {
  int block_generations = 10;
  GeneBlock start_phase = GeneBlock::kContinuous;

  void validate() const;
  GeneBlock phase_at(int generation) const;
};

struct SearchSpace {
  std::size_t continuous_dim = 0;
  Index filter_rows = 0;  // M, or 0 when no filter is searched
  Index filter_cols = 0;  // C

  std::size_t filter_bits() const { return static_cast<std::size_t>(filter_rows * filter_cols); }
  bool has_filter() const { return filter_rows > 0 && filter_cols > 0; }
};

struct Candidate {
  std::vector<double> continuous_genes;
  /// Row-major M x C bits; empty unless the filter is searched.
  std::vector<std::uint8_t> filter_genes;
  /// Lower is better. Non-finite objective values are stored as the largest double.
  double fitness = std::numeric_limits<double>::infinity();
};

struct TrainingLog {
  std::vector<double> best_fitness;  // best-so-far after each iteration
  std::vector<double> iteration_seconds;
  Candidate best;
};

using CandidateFitness = std::function<double(const Candidate&)>;
using ObjectiveFunction = std::function<double(std::span<const double>)>;
using BitObjective = std::function<double(std::span<const std::uint8_t>)>;
/// Called after each generation with the current population.
using GenerationObserver =
    std::function<void(int generation, GeneBlock block, std::span<const Candidate> population)>;

struct SearchOptions {
  /// Alternate blocks when the space has a filter; otherwise every
  /// generation moves the real genes (or the filter, if there are none).
  std::optional<TwoStepSchedule> schedule;
  GenerationObserver observer;
};

/// Generic entry point: config.algorithm picks the engine.
TrainingLog search(const CandidateFitness& fitness, const SearchSpace& space,
                   const HeuristicConfig& config, std::uint64_t seed,
                   const SearchOptions& options = {});

/// Real-vector minimisation with a specific algorithm. Each throws
/// UsageError when config.algorithm names a different one.
TrainingLog run_bbo(const ObjectiveFunction& f, std::size_t dim, const HeuristicConfig& config,
                    std::uint64_t seed);
TrainingLog run_ga(const ObjectiveFunction& f, std::size_t dim, const HeuristicConfig& config,
                   std::uint64_t seed);
TrainingLog run_pso(const ObjectiveFunction& f, std::size_t dim, const HeuristicConfig& config,
                    std::uint64_t seed);
TrainingLog run_pbil(const ObjectiveFunction& f, std::size_t dim, const HeuristicConfig& config,
                     std::uint64_t seed);
TrainingLog run_es(const ObjectiveFunction& f, std::size_t dim, const HeuristicConfig& config,
                   std::uint64_t seed);

struct PbilBitsResult {
  TrainingLog log;  // best.filter_genes holds the best bit string
  std::vector<double> probabilities;
};

/// PBIL directly over a raw bit string (no gray decoding).
PbilBitsResult run_pbil_bits(const BitObjective& f, std::size_t bits,
                             const HeuristicConfig& config, std::uint64_t seed);

/// Training-set loss of a candidate under a model configuration.
class FitnessEvaluator {
 public:
  FitnessEvaluator(const LabeledDataset& train, ModelConfig config);

  double operator()(const Candidate& c) const;
  const ModelConfig& config() const { return evaluator_.config(); }
  SearchSpace search_space() const;
  /// Throws UsageError when the genes do not decode for this configuration.
  ModelParams params_of(const Candidate& c) const;
  PreferenceFilter filter_of(const Candidate& c) const;

 private:
  BatchEvaluator evaluator_;
  std::optional<PreferenceFilter> fixed_filter_;
};

double evaluate_fitness(const Candidate& candidate, const LabeledDataset& train,
                        const ModelConfig& config);

/// Learned model; `log.best` is the candidate both fields decode from.
struct TrainedModel {
  ModelParams params;
  PreferenceFilter filter;
  TrainingLog log;
};

/// MODN only: alternating filter / parameter phases over one population.
TrainedModel train_modn_two_step(const LabeledDataset& train, const ModelConfig& config,
                                 const HeuristicConfig& heuristic,
                                 const TwoStepSchedule& schedule, std::uint64_t seed,
                                 const GenerationObserver& observer = {});

/// Any variant. MODN goes through the two-step scheme; the fixed-filter
/// variants and DNM search the real genes only.
TrainedModel train_heuristic(const LabeledDataset& train, const ModelConfig& config,
                             const HeuristicConfig& heuristic, std::uint64_t seed,
                             const TwoStepSchedule& schedule = {});

/// Full-batch gradient descent from a random start in `init`. MODN needs an
/// explicit frozen filter; the fixed-filter variants use their own.
TrainedModel train_bp(const LabeledDataset& train, const ModelConfig& config, const BpConfig& bp,
                      std::uint64_t seed, Bounds init = {-1.0, 1.0},
                      std::optional<PreferenceFilter> filter = std::nullopt);

}  // namespace modn
