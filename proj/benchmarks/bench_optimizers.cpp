#include <benchmark/benchmark.h>

#include "modn/optimizers.hpp"

using namespace modn;

namespace {

double sphere(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

// Cost of the search machinery alone, with a trivial objective.
void BM_SphereGeneration(benchmark::State& state) {
  const auto algorithm = static_cast<Algorithm>(state.range(0));
  HeuristicConfig c = HeuristicConfig::defaults(algorithm);
  c.max_iterations = 10;
  for (auto _ : state) benchmark::DoNotOptimize(search(
      [](const Candidate& k) { return sphere(k.continuous_genes); }, SearchSpace{120, 0, 0}, c, 3));
  state.SetItemsProcessed(state.iterations() * c.max_iterations);
}
BENCHMARK(BM_SphereGeneration)->DenseRange(0, 4);

}  // namespace
