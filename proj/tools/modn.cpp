// modn: train, compare, sweep and inspect dendritic neuron models.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "modn/errors.hpp"
#include "modn/harness.hpp"

namespace {

struct CommonFlags {
  std::string dataset, variant, optimizer, config_file, out, data_dir;
  int runs = 0, workers = 0;
  std::uint64_t seed = 0;
  bool record_time = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--dataset", f.dataset, "registry name (iris, breast_cancer, ...) or CSV path");
  cmd->add_option("--variant", f.variant, "dnm, modn, modnp or modnf")
      ->check(CLI::IsMember({"dnm", "modn", "modnp", "modnf"}, CLI::ignore_case));
  cmd->add_option("--optimizer", f.optimizer, "bp, bbo, ga, pso, pbil or es")
      ->check(CLI::IsMember({"bp", "bbo", "ga", "pso", "pbil", "es"}, CLI::ignore_case));
  cmd->add_option("--runs", f.runs, "independent runs (default 30)")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", f.seed, "base seed; run i uses seed + i");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--config", f.config_file, "JSON experiment config")->check(CLI::ExistingFile);
  cmd->add_option("--data-dir", f.data_dir, "directory holding the dataset CSV files");
  cmd->add_option("--workers", f.workers, "concurrent runs")->check(CLI::PositiveNumber);
  cmd->add_flag("--record-time", f.record_time, "store measured wall time in the exports");
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

modn::ExperimentConfig resolve(const CommonFlags& f, CLI::App* cmd) {
  modn::ConfigOverrides o;
  if (!f.dataset.empty()) o.dataset = f.dataset;
  if (!f.variant.empty()) o.variant = lower(f.variant);
  if (!f.optimizer.empty()) o.optimizer = lower(f.optimizer);
  if (cmd->count("--runs")) o.runs = f.runs;
  if (cmd->count("--seed")) o.seed = f.seed;
  if (!f.out.empty()) o.out_dir = f.out;
  if (cmd->count("--workers")) o.workers = f.workers;
  if (f.record_time) o.record_time = true;
  if (!f.data_dir.empty()) o.data_dir = f.data_dir;
  else if (const char* env = std::getenv("MODN_DATA_DIR")) o.data_dir = env;
  o.default_data_dir = MODN_DEFAULT_DATA_DIR;

  std::optional<std::string> text;
  if (!f.config_file.empty()) {
    std::ifstream in(f.config_file);
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  return modn::build_experiment(text, o);
}

void print_summary(const modn::AggregateResult& r) {
  std::printf("%s %s/%s  runs=%zu completed=%zu failed=%zu\n", r.dataset.c_str(),
              std::string(modn::to_string(r.variant)).c_str(), r.optimizer.c_str(), r.runs.size(),
              r.completed, r.failed());
  std::printf("  mean ACC %.4f (sd %.4f)   mean AUC %.4f (sd %.4f)   mean final loss %.6g\n", r.mean_acc,
              r.std_acc, r.mean_auc, r.std_auc, r.mean_final_loss);
  for (const auto& run : r.runs)
    if (!run.ok()) std::printf("  seed %llu %s\n", static_cast<unsigned long long>(run.seed), run.status.c_str());
  if (const modn::DatasetDescriptor* d = modn::find_dataset(r.dataset))
    std::printf("  published MODNF: ACC %.4f AUC %.4f\n", d->modnf.acc, d->modnf.auc);
}

void write_config(const modn::ExperimentConfig& c) {
  std::filesystem::create_directories(c.out_dir);
  std::ofstream out(c.out_dir / "config.json", std::ios::binary | std::ios::trunc);
  out << modn::experiment_to_json(c);
  if (!out) throw std::runtime_error("cannot write " + (c.out_dir / "config.json").string());
}

int cmd_train(const CommonFlags& f, CLI::App* cmd, bool dump_only) {
  const modn::ExperimentConfig c = resolve(f, cmd);
  if (dump_only) {
    std::cout << modn::experiment_to_json(c);
    return 0;
  }
  const modn::AggregateResult result = modn::run_experiment(c);
  write_config(c);
  modn::export_results(result, c.out_dir);
  print_summary(result);
  std::printf("  results in %s\n", c.out_dir.string().c_str());
  return result.failed() == 0 ? 0 : 1;
}

int cmd_compare(const std::string& a_dir, const std::string& b_dir) {
  const modn::AggregateResult a = modn::load_summary(a_dir);
  const modn::AggregateResult b = modn::load_summary(b_dir);
  const modn::WsrtResult w = modn::compare_experiments(a, b);
  std::printf("A: %s  %s/%s  mean ACC %.4f  mean AUC %.4f\n", a_dir.c_str(),
              std::string(modn::to_string(a.variant)).c_str(), a.optimizer.c_str(), a.mean_acc, a.mean_auc);
  std::printf("B: %s  %s/%s  mean ACC %.4f  mean AUC %.4f\n", b_dir.c_str(),
              std::string(modn::to_string(b.variant)).c_str(), b.optimizer.c_str(), b.mean_acc, b.mean_auc);
  std::printf("signed-rank on ACC (B - A): T=%zu  W+=%.1f  W-=%.1f  mu=%.2f  delta=%.4f\n", w.t_effective,
              w.w_plus, w.w_minus, w.mu_hat, w.delta_hat);
  std::printf("  p=%.6e  p_adjusted=%.6e\n", w.p_value, w.p_adjusted);
  if (const modn::DatasetDescriptor* d = modn::find_dataset(a.dataset)) {
    std::printf("published %s: MODNF ACC %.4f AUC %.4f", d->display_name.c_str(), d->modnf.acc, d->modnf.auc);
    if (d->mlp) std::printf(" | MLP ACC %.4f AUC %.4f", d->mlp->acc, d->mlp->auc);
    if (d->dnm) std::printf(" | DNM ACC %.4f AUC %.4f", d->dnm->acc, d->dnm->auc);
    std::printf("\n");
  }
  return 0;
}

int cmd_sweep(const CommonFlags& f, CLI::App* cmd, const std::string& param, const std::vector<double>& values) {
  const modn::ExperimentConfig c = resolve(f, cmd);
  const auto points = modn::run_sweep(c, param, values);
  int status = 0;
  for (const auto& p : points) {
    std::printf("%s=%g  mean ACC %.4f  mean AUC %.4f  (%zu/%zu runs)\n", param.c_str(), p.value,
                p.result.mean_acc, p.result.mean_auc, p.result.completed, p.result.runs.size());
    if (p.result.failed() > 0) status = 1;
  }
  std::printf("table in %s\n", (c.out_dir / "sweep.csv").string().c_str());
  return status;
}

int cmd_states(const std::string& file) {
  const modn::SavedModel m = modn::load_model(file);
  std::cout << modn::format_state_report(m, modn::describe_states(m));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-output dendritic neuron models"};
  app.require_subcommand(1);

  CommonFlags train_flags;
  bool dump_config = false;
  auto* train = app.add_subcommand("train", "run one experiment and export its results");
  add_common(train, train_flags);
  train->add_flag("--dump-config", dump_config, "print the resolved config and exit");

  std::string a_dir, b_dir;
  auto* compare = app.add_subcommand("compare", "signed-rank test between two result directories");
  compare->add_option("a", a_dir, "baseline results")->required()->check(CLI::ExistingDirectory);
  compare->add_option("b", b_dir, "challenger results")->required()->check(CLI::ExistingDirectory);

  CommonFlags sweep_flags;
  std::string param;
  std::vector<double> values;
  auto* sweep = app.add_subcommand("sweep", "repeat an experiment over a grid of M, alpha_s or alpha_t");
  add_common(sweep, sweep_flags);
  sweep->add_option("--param", param, "M, alpha_s or alpha_t")
      ->required()
      ->check(CLI::IsMember({"M", "alpha_s", "alpha_t"}));
  sweep->add_option("--values", values, "grid values, comma separated")->required()->delimiter(',');

  std::string model_file;
  auto* states = app.add_subcommand("states", "classify synapse and dendrite states of a saved model");
  states->add_option("model", model_file, "models/model_run_NNN.json from a train export")
      ->required()
      ->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(train_flags, train, dump_config);
    if (*compare) return cmd_compare(a_dir, b_dir);
    if (*sweep) return cmd_sweep(sweep_flags, sweep, param, values);
    if (*states) return cmd_states(model_file);
  } catch (const modn::ParseError& e) {
    std::fprintf(stderr, "error: %s (row %zu, column %zu)\n", e.what(), e.row(), e.column());
    return 2;
  } catch (const modn::UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
