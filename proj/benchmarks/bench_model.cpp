#include <benchmark/benchmark.h>

#include "modn/gradients.hpp"
#include "modn/model.hpp"
#include "modn/rng.hpp"

using namespace modn;

namespace {

struct Setup {
  ModelConfig config;
  ModelParams params;
  PreferenceFilter filter;
  Eigen::MatrixXd x;
  Eigen::MatrixXd targets;
  std::vector<Index> labels;

  Setup(Index d, Index m, Index c, Index n) {
    config.variant = Variant::kModnf;
    config.input_dim = d;
    config.dendrite_count = m;
    config.output_dim = c;
    Rng rng(1);
    params = ModelParams::random(config, rng);
    filter = default_filter(config);
    x.resize(n, d);
    targets = Eigen::MatrixXd::Zero(n, c);
    for (Index k = 0; k < n; ++k) {
      for (Index i = 0; i < d; ++i) x(k, i) = rng.uniform();
      labels.push_back(static_cast<Index>(rng.index(static_cast<std::size_t>(c))));
      targets(k, labels.back()) = 1.0;
    }
  }
};

void BM_Forward(benchmark::State& state) {
  const Setup s(static_cast<Index>(state.range(0)), static_cast<Index>(state.range(1)), 3, 1);
  const Eigen::VectorXd x = s.x.row(0).transpose();
  for (auto _ : state) benchmark::DoNotOptimize(forward(x, s.params, s.filter, s.config));
}
BENCHMARK(BM_Forward)->Args({4, 12})->Args({13, 48});

void BM_BatchLoss(benchmark::State& state) {
  const Setup s(4, 12, 3, state.range(0));
  const BatchEvaluator eval(s.config, s.x, s.labels);
  const std::vector<double> genes = s.params.to_genes();
  for (auto _ : state) benchmark::DoNotOptimize(eval.loss(genes, s.filter));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BatchLoss)->Arg(90)->Arg(546)->Arg(1209);

void BM_BatchGradients(benchmark::State& state) {
  const Setup s(4, 12, 3, state.range(0));
  const BpConfig bp;
  for (auto _ : state) benchmark::DoNotOptimize(batch_gradients(s.params, s.x, s.targets, s.filter, s.config, bp));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BatchGradients)->Arg(90)->Arg(546);

}  // namespace

BENCHMARK_MAIN();
