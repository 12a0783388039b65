#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "modn/errors.hpp"
#include "modn/harness.hpp"

using namespace modn;
namespace fs = std::filesystem;

namespace {

ConfigOverrides iris_overrides() {
  ConfigOverrides o;
  o.dataset = "iris";
  o.default_data_dir = MODN_TEST_DATA_DIR;
  return o;
}

ExperimentConfig tiny(const std::string& optimizer, Variant v = Variant::kModn) {
  ConfigOverrides o = iris_overrides();
  o.optimizer = optimizer;
  o.variant = std::string(to_string(v));
  o.runs = 3;
  ExperimentConfig c = build_experiment(
      std::string(R"({"heuristic": {"population_size": 12, "max_iterations": 6}, "bp": {"max_iterations": 20}})"), o);
  return c;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::path(::testing::TempDir()) / ("modn_harness_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

bool have_iris() { return fs::exists(fs::path(MODN_TEST_DATA_DIR) / "iris.csv"); }

}  // namespace

TEST(Config, DefaultsFollowRegistry) {
  const ExperimentConfig c = build_experiment(std::nullopt, iris_overrides());
  EXPECT_EQ(c.optimizer, "bbo");
  EXPECT_EQ(c.variant, Variant::kModn);
  EXPECT_EQ(c.dendrites, 12);
  EXPECT_EQ(c.train_count, 90u);
  EXPECT_EQ(c.test_count, 60u);
  EXPECT_EQ(c.heuristic.algorithm, Algorithm::kBbo);
  EXPECT_EQ(c.heuristic.max_iterations, default_iterations("iris"));
  EXPECT_EQ(c.runs, 30);
}

TEST(Config, FileThenFlags) {
  ConfigOverrides o = iris_overrides();
  o.runs = 4;
  const ExperimentConfig c = build_experiment(
      std::string(R"({"optimizer": "pso", "runs": 9, "seed": 11, "model": {"dendrites": 6},
                      "heuristic": {"pso": {"social": 1.5}}})"),
      o);
  EXPECT_EQ(c.optimizer, "pso");
  EXPECT_EQ(c.heuristic.algorithm, Algorithm::kPso);
  EXPECT_EQ(c.runs, 4);
  EXPECT_EQ(c.seed, 11u);
  EXPECT_EQ(c.dendrites, 6);
  EXPECT_DOUBLE_EQ(c.heuristic.pso.social, 1.5);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  const ConfigOverrides o = iris_overrides();
  EXPECT_THROW(build_experiment(std::string(R"({"rnus": 3})"), o), UsageError);
  EXPECT_THROW(build_experiment(std::string(R"({"heuristic": {"bbo": {"elite": 2}}})"), o), UsageError);
  EXPECT_THROW(build_experiment(std::string(R"({"runs": "many"})"), o), UsageError);
  EXPECT_THROW(build_experiment(std::string(R"({"runs": 0})"), o), UsageError);
  EXPECT_THROW(build_experiment(std::string(R"({"optimizer": "sgd"})"), o), UsageError);
  EXPECT_THROW(build_experiment(std::string("{not json"), o), ParseError);
  EXPECT_THROW(build_experiment(std::nullopt, ConfigOverrides{}), UsageError);
  ConfigOverrides dnm = iris_overrides();
  dnm.variant = "dnm";
  dnm.optimizer = "bp";
  EXPECT_THROW(build_experiment(std::nullopt, dnm), UsageError);
}

TEST(Config, JsonRoundTrip) {
  ConfigOverrides o = iris_overrides();
  o.optimizer = "ga";
  o.seed = 42;
  const ExperimentConfig a = build_experiment(std::string(R"({"heuristic": {"ga": {"elites": 3}}})"), o);
  const std::string text = experiment_to_json(a);
  const ExperimentConfig b = build_experiment(text, ConfigOverrides{});
  EXPECT_EQ(experiment_to_json(b), text);
  EXPECT_EQ(b.heuristic.ga.elites, 3);
  EXPECT_EQ(b.seed, 42u);
}

TEST(Run, MissingDatasetIsUsageError) {
  ExperimentConfig c = build_experiment(std::nullopt, iris_overrides());
  c.data_dir = "/definitely/not/here";
  EXPECT_THROW(prepare_experiment(c), UsageError);
}

TEST(Run, SmallExperimentAndExport) {
  if (!have_iris()) GTEST_SKIP();
  const ExperimentConfig c = tiny("bbo");
  const AggregateResult r = run_experiment(c);
  ASSERT_EQ(r.runs.size(), 3u);
  EXPECT_EQ(r.completed, 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(r.runs[i].seed, c.seed + i);
    EXPECT_TRUE(r.runs[i].ok()) << r.runs[i].status;
    EXPECT_EQ(r.runs[i].loss_curve.size(), 6u);
    EXPECT_GE(r.runs[i].acc, 0.0);
    EXPECT_LE(r.runs[i].auc, 1.0);
    ASSERT_TRUE(r.runs[i].filter.has_value());
    EXPECT_FALSE(r.runs[i].filter->has_inoperative_row());
  }

  const fs::path dir = scratch_dir("export");
  export_results(r, dir);
  for (const char* f : {"summary.json", "runs.csv", "curves/loss_run_001.csv", "roc/roc_run_003.csv",
                        "filters/P_run_002.csv", "models/model_run_001.json"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_EQ(slurp(dir / "curves/loss_run_001.csv").rfind("iteration,loss\n1,", 0), 0u);

  const AggregateResult back = load_summary(dir);
  EXPECT_EQ(back.runs.size(), 3u);
  EXPECT_DOUBLE_EQ(back.mean_acc, r.mean_acc);
  EXPECT_DOUBLE_EQ(back.runs[1].auc, r.runs[1].auc);

  const SavedModel m = load_model(dir / "models/model_run_002.json");
  EXPECT_EQ(m.filter, *r.runs[1].filter);
  EXPECT_EQ(m.params.synaptic_weights, r.runs[1].params.synaptic_weights);
  const StateReport states = describe_states(m);
  EXPECT_EQ(states.synapses.size(), 4u);
  EXPECT_EQ(states.dendrites.size(), 12u);
  EXPECT_EQ(states.count(DendriteState::kInoperative), 0u);
  std::size_t total = 0;
  for (SynapseState s : {SynapseState::kExcitatory, SynapseState::kInhibitory, SynapseState::kUnvarying0,
                         SynapseState::kUnvarying1, SynapseState::kIndeterminate})
    total += states.count(s);
  EXPECT_EQ(total, 48u);
  EXPECT_NE(format_state_report(m, states).find("dendrites:"), std::string::npos);

  const WsrtResult self = compare_experiments(r, r);
  EXPECT_EQ(self.t_effective, 0u);
  EXPECT_EQ(self.p_value, 1.0);
  AggregateResult shorter = r;
  shorter.runs.pop_back();
  EXPECT_THROW(compare_experiments(r, shorter), UsageError);
}

TEST(Run, ReproducibleAcrossWorkers) {
  if (!have_iris()) GTEST_SKIP();
  ExperimentConfig c = tiny("pso", Variant::kModnf);
  const AggregateResult one = run_experiment(c);
  c.workers = 3;
  const AggregateResult three = run_experiment(c);
  const fs::path a = scratch_dir("w1"), b = scratch_dir("w3");
  export_results(one, a);
  export_results(three, b);
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), a);
    EXPECT_EQ(slurp(e.path()), slurp(b / rel)) << rel;
  }
}

TEST(Run, BackpropagationOnModnf) {
  if (!have_iris()) GTEST_SKIP();
  const AggregateResult r = run_experiment(tiny("bp", Variant::kModnf));
  EXPECT_EQ(r.completed, 3u);
  for (const RunResult& run : r.runs) {
    EXPECT_FALSE(run.filter.has_value());
    EXPECT_EQ(run.loss_curve.size(), 20u);
  }
}

TEST(Model, SaveLoadRoundTrip) {
  SavedModel m;
  m.config.variant = Variant::kModnp;
  m.config.input_dim = 2;
  m.config.dendrite_count = 4;
  m.config.output_dim = 2;
  Rng rng(5);
  m.params = ModelParams::random(m.config, rng);
  m.filter = default_filter(m.config);
  const fs::path file = scratch_dir("model") / "m.json";
  fs::create_directories(file.parent_path());
  save_model(m, file);
  const SavedModel back = load_model(file);
  EXPECT_EQ(back.config.variant, Variant::kModnp);
  EXPECT_EQ(back.params.synaptic_thresholds, m.params.synaptic_thresholds);
  EXPECT_EQ(back.params.telodendron_weights, m.params.telodendron_weights);
  EXPECT_EQ(back.filter, m.filter);
  EXPECT_THROW(load_model(file.parent_path() / "absent.json"), std::runtime_error);
}
