#pragma once

// Experiment orchestration: repeated seeded runs, test metrics, aggregation,
// result export and the paired signed-rank comparison.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "modn/data.hpp"
#include "modn/gradients.hpp"
#include "modn/metrics.hpp"
#include "modn/model.hpp"
#include "modn/optimizers.hpp"

namespace modn {

struct ExperimentConfig {
  /// Registry name ("iris") or a path to a CSV file.
  std::string dataset = "iris";
  std::filesystem::path data_dir = "data";
  Variant variant = Variant::kModn;
  /// "bp" or one of the heuristics.
  std::string optimizer = "bbo";

  // Model; dendrites = 0 means 10 * C.
  Index dendrites = 0;
  double synaptic_scale = 10.0;
  double telodendron_scale = 1.0;
  double dnm_soma_scale = 10.0;
  double dnm_soma_threshold = 0.5;

  HeuristicConfig heuristic;
  BpConfig bp;
  TwoStepSchedule schedule;
  /// Initial box for the real genes (heuristics and BP).
  Bounds init_bounds{-1.0, 1.0};

  // Split; both 0 means the registry counts (or 80/20 for a custom file).
  std::size_t train_count = 0;
  std::size_t test_count = 0;
  CsvSchema schema;  // custom files only

  int runs = 30;
  std::uint64_t seed = 1;
  std::filesystem::path out_dir = "results";
  int workers = 1;
  /// Store measured wall time; off keeps exports byte-reproducible.
  bool record_time = false;

  bool uses_bp() const { return optimizer == "bp"; }
  void validate() const;
};

/// Defaults for a dataset / variant / optimizer triple: published
/// per-algorithm settings, tuned model sizes and the generation budget.
ExperimentConfig default_experiment(std::string_view dataset, Variant variant,
                                    std::string_view optimizer);

/// Fields set on the command line; they win over the config file.
struct ConfigOverrides {
  std::optional<std::string> dataset;
  std::optional<std::string> variant;
  std::optional<std::string> optimizer;
  std::optional<int> runs;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::filesystem::path> data_dir;
  std::optional<int> workers;
  std::optional<bool> record_time;
  /// Replaces the built-in data directory before the file is applied.
  std::optional<std::filesystem::path> default_data_dir;
};

/// Resolution order: defaults for the (dataset, variant, optimizer) named
/// by the overrides or the file, then the file's fields, then the
/// overrides. Throws UsageError on unknown keys or bad values.
ExperimentConfig build_experiment(const std::optional<std::string>& config_json,
                                  const ConfigOverrides& overrides);
std::string experiment_to_json(const ExperimentConfig& config);

struct RunResult {
  std::uint64_t seed = 0;
  double acc = 0.0;
  double auc = 0.0;
  double final_loss = 0.0;
  double wall_seconds = 0.0;
  /// "ok", or "failed: <reason>".
  std::string status = "ok";
  std::vector<double> loss_curve;
  RocCurve roc;
  ModelParams params;
  std::optional<PreferenceFilter> filter;  // learned filter (MODN only)

  bool ok() const { return status == "ok"; }
};

struct AggregateResult {
  std::string dataset;
  Variant variant = Variant::kModn;
  std::string optimizer;
  ModelConfig model;
  std::vector<RunResult> runs;
  // Over completed runs only.
  std::size_t completed = 0;
  double mean_acc = 0.0;
  double mean_auc = 0.0;
  double std_acc = 0.0;
  double std_auc = 0.0;
  double mean_final_loss = 0.0;

  std::size_t failed() const { return runs.size() - completed; }
  /// Recomputes the summary fields from `runs`.
  void recompute();
};

/// Loaded, split-ready data plus the model configuration it implies.
struct PreparedExperiment {
  ExperimentConfig config;
  RawDataset raw;
  ModelConfig model;
  std::size_t train_count = 0;
  std::size_t test_count = 0;
  std::string dataset_label;
};

PreparedExperiment prepare_experiment(const ExperimentConfig& config);

/// One run with seed `seed`: split, train, evaluate on the test portion.
/// Exceptions from training are caught and reported in `status`.
RunResult run_single(const PreparedExperiment& prepared, std::uint64_t seed);

/// Runs seeds seed .. seed + runs - 1 (up to `workers` at a time) and
/// reduces them in seed order. Nothing is written.
AggregateResult run_experiment(const ExperimentConfig& config);

/// Signed-rank test on per-run ACC, paired by run index, with differences
/// b - a. Runs failed on either side are dropped pairwise.
WsrtResult compare_experiments(const AggregateResult& a, const AggregateResult& b);

/// Files under `dir`:
///   summary.json           run records (seed, acc, auc, final_loss,
///                          wall_seconds, status) then the aggregate
///   runs.csv               the same run records
///   curves/loss_run_NNN.csv  iteration,loss
///   roc/roc_run_NNN.csv      fpr,tpr,threshold
///   filters/P_run_NNN.csv    M x C grid of 0/1 (MODN only)
///   models/model_run_NNN.json  parameters and filter (for `states`)
/// Throws std::runtime_error naming the path on I/O failure.
void export_results(const AggregateResult& result, const std::filesystem::path& dir);

/// Reads summary.json back (run records and aggregate, no curves).
AggregateResult load_summary(const std::filesystem::path& dir);

struct SweepPoint {
  std::string parameter;
  double value = 0.0;
  AggregateResult result;
};

/// parameter: "M", "alpha_s" or "alpha_t". Each point is exported to
/// <out>/<parameter>_<value>/ and a table goes to <out>/sweep.csv.
std::vector<SweepPoint> run_sweep(const ExperimentConfig& base, std::string_view parameter,
                                  const std::vector<double>& values);

struct SavedModel {
  ModelConfig config;
  ModelParams params;
  PreferenceFilter filter;
};

SavedModel load_model(const std::filesystem::path& file);
void save_model(const SavedModel& model, const std::filesystem::path& file);

struct StateReport {
  std::vector<std::vector<SynapseState>> synapses;  // [i][j], D x M
  std::vector<DendriteState> dendrites;
  std::size_t count(SynapseState s) const;
  std::size_t count(DendriteState s) const;
};

StateReport describe_states(const SavedModel& model);
std::string format_state_report(const SavedModel& model, const StateReport& report);

}  // namespace modn
