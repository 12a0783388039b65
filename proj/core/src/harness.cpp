#include "modn/harness.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <thread>

#include "modn/errors.hpp"

namespace modn {

using Json = nlohmann::ordered_json;

namespace {

// Round-trip formatting, independent of locale and stream state.
std::string num(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string run_tag(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03zu", i + 1);
  return buf;
}

void expect_keys(const Json& obj, std::string_view where, std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) throw UsageError(std::string(where) + " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw UsageError("unknown config key '" + std::string(where) + "." + key + "'");
  }
}

template <typename T>
void read(const Json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("config key '") + key + "': " + e.what());
  }
}

void read_bounds(const Json& obj, const char* key, Bounds& out) {
  if (!obj.contains(key)) return;
  const Json& v = obj.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
    throw UsageError(std::string("config key '") + key + "' must be [lo, hi]");
  out = Bounds{v[0].get<double>(), v[1].get<double>()};
}

Json bounds_json(const Bounds& b) { return Json::array({b.lo, b.hi}); }

std::string_view phase_name(GeneBlock b) { return b == GeneBlock::kFilter ? "filter" : "parameters"; }

GeneBlock parse_phase(const std::string& s) {
  if (s == "filter") return GeneBlock::kFilter;
  if (s == "parameters") return GeneBlock::kContinuous;
  throw UsageError("schedule.start_phase must be \"parameters\" or \"filter\"");
}

void check_optimizer_name(std::string_view name) {
  if (name != "bp") (void)parse_algorithm(name);
}

void apply_json(ExperimentConfig& c, const Json& j) {
  expect_keys(j, "config",
              {"dataset", "data_dir", "variant", "optimizer", "model", "heuristic", "bp", "schedule",
               "init_bounds", "split", "runs", "seed", "out", "workers", "record_time"});
  read(j, "dataset", c.dataset);
  if (j.contains("data_dir")) c.data_dir = j.at("data_dir").get<std::string>();
  if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
  read(j, "optimizer", c.optimizer);
  read(j, "runs", c.runs);
  read(j, "seed", c.seed);
  if (j.contains("out")) c.out_dir = j.at("out").get<std::string>();
  read(j, "workers", c.workers);
  read(j, "record_time", c.record_time);
  read_bounds(j, "init_bounds", c.init_bounds);

  if (j.contains("model")) {
    const Json& m = j.at("model");
    expect_keys(m, "model", {"dendrites", "synaptic_scale", "telodendron_scale", "dnm_soma_scale",
                             "dnm_soma_threshold"});
    read(m, "dendrites", c.dendrites);
    read(m, "synaptic_scale", c.synaptic_scale);
    read(m, "telodendron_scale", c.telodendron_scale);
    read(m, "dnm_soma_scale", c.dnm_soma_scale);
    read(m, "dnm_soma_threshold", c.dnm_soma_threshold);
  }
  if (j.contains("split")) {
    const Json& s = j.at("split");
    expect_keys(s, "split", {"train", "test", "has_header", "label_column", "label_name",
                             "categorical_columns", "ignored_columns"});
    read(s, "train", c.train_count);
    read(s, "test", c.test_count);
    read(s, "has_header", c.schema.has_header);
    if (s.contains("label_column")) c.schema.label_index = s.at("label_column").get<std::size_t>();
    if (s.contains("label_name")) c.schema.label_name = s.at("label_name").get<std::string>();
    read(s, "categorical_columns", c.schema.categorical_columns);
    read(s, "ignored_columns", c.schema.ignored_columns);
  }
  if (j.contains("heuristic")) {
    const Json& h = j.at("heuristic");
    expect_keys(h, "heuristic", {"population_size", "max_iterations", "search_bounds", "bbo", "ga",
                                 "pso", "pbil", "es"});
    HeuristicConfig& hc = c.heuristic;
    read(h, "population_size", hc.population_size);
    read(h, "max_iterations", hc.max_iterations);
    read_bounds(h, "search_bounds", hc.search_bounds);
    if (h.contains("bbo")) {
      const Json& b = h.at("bbo");
      expect_keys(b, "heuristic.bbo", {"modification_probability", "immigration_bounds", "step_size",
                                       "max_immigration", "max_emigration", "mutation_probability",
                                       "mutation_scale", "elites"});
      read(b, "modification_probability", hc.bbo.modification_probability);
      read_bounds(b, "immigration_bounds", hc.bbo.immigration_bounds);
      read(b, "step_size", hc.bbo.step_size);
      read(b, "max_immigration", hc.bbo.max_immigration);
      read(b, "max_emigration", hc.bbo.max_emigration);
      read(b, "mutation_probability", hc.bbo.mutation_probability);
      read(b, "mutation_scale", hc.bbo.mutation_scale);
      read(b, "elites", hc.bbo.elites);
    }
    if (h.contains("ga")) {
      const Json& g = h.at("ga");
      expect_keys(g, "heuristic.ga", {"bits_per_gene", "crossover_probability", "mutation_probability", "elites"});
      read(g, "bits_per_gene", hc.ga.bits_per_gene);
      read(g, "crossover_probability", hc.ga.crossover_probability);
      read(g, "mutation_probability", hc.ga.mutation_probability);
      read(g, "elites", hc.ga.elites);
    }
    if (h.contains("pso")) {
      const Json& p = h.at("pso");
      expect_keys(p, "heuristic.pso", {"inertia", "final_inertia", "cognitive", "social"});
      read(p, "inertia", hc.pso.inertia);
      read(p, "final_inertia", hc.pso.final_inertia);
      read(p, "cognitive", hc.pso.cognitive);
      read(p, "social", hc.pso.social);
    }
    if (h.contains("pbil")) {
      const Json& p = h.at("pbil");
      expect_keys(p, "heuristic.pbil", {"bits_per_gene", "learning_rate", "negative_learning_rate",
                                        "best_individuals", "bad_populations"});
      read(p, "bits_per_gene", hc.pbil.bits_per_gene);
      read(p, "learning_rate", hc.pbil.learning_rate);
      read(p, "negative_learning_rate", hc.pbil.negative_learning_rate);
      read(p, "best_individuals", hc.pbil.best_individuals);
      read(p, "bad_populations", hc.pbil.bad_populations);
    }
    if (h.contains("es")) {
      const Json& e = h.at("es");
      expect_keys(e, "heuristic.es", {"global_variance", "new_individuals"});
      read(e, "global_variance", hc.es.global_variance);
      read(e, "new_individuals", hc.es.new_individuals);
    }
  }
  if (j.contains("bp")) {
    const Json& b = j.at("bp");
    expect_keys(b, "bp", {"learning_rate", "max_iterations", "zero_threshold", "dying_mitigation"});
    read(b, "learning_rate", c.bp.learning_rate);
    read(b, "max_iterations", c.bp.max_iterations);
    read(b, "zero_threshold", c.bp.zero_threshold);
    read(b, "dying_mitigation", c.bp.dying_mitigation);
  }
  if (j.contains("schedule")) {
    const Json& s = j.at("schedule");
    expect_keys(s, "schedule", {"block_generations", "start_phase"});
    read(s, "block_generations", c.schedule.block_generations);
    if (s.contains("start_phase")) c.schedule.start_phase = parse_phase(s.at("start_phase").get<std::string>());
  }
}

std::uint64_t trainer_seed(std::uint64_t run_seed) {
  // Separate stream from the split shuffle, still a function of the run seed only.
  return run_seed ^ 0x9E3779B97F4A7C15ull;
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << content;
  out.close();
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void make_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
}

Json run_record(const RunResult& r) {
  Json j;
  j["seed"] = r.seed;
  j["acc"] = r.acc;
  j["auc"] = r.auc;
  j["final_loss"] = r.final_loss;
  j["wall_seconds"] = r.wall_seconds;
  j["status"] = r.status;
  return j;
}

Json model_config_json(const ModelConfig& m) {
  Json j;
  j["variant"] = std::string(to_string(m.variant));
  j["input_dim"] = m.input_dim;
  j["dendrite_count"] = m.dendrite_count;
  j["output_dim"] = m.output_dim;
  j["synaptic_scale"] = m.synaptic_scale;
  j["telodendron_scale"] = m.telodendron_scale;
  j["dnm_soma_scale"] = m.dnm_soma_scale;
  j["dnm_soma_threshold"] = m.dnm_soma_threshold;
  return j;
}

ModelConfig model_config_from_json(const Json& j) {
  ModelConfig m;
  m.variant = parse_variant(j.at("variant").get<std::string>());
  m.input_dim = j.at("input_dim").get<Index>();
  m.dendrite_count = j.at("dendrite_count").get<Index>();
  m.output_dim = j.at("output_dim").get<Index>();
  m.synaptic_scale = j.at("synaptic_scale").get<double>();
  m.telodendron_scale = j.at("telodendron_scale").get<double>();
  m.dnm_soma_scale = j.value("dnm_soma_scale", 10.0);
  m.dnm_soma_threshold = j.value("dnm_soma_threshold", 0.5);
  return m;
}

Json matrix_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const Json& j, Index rows, Index cols, const char* what) {
  if (!j.is_array() || static_cast<Index>(j.size()) != rows)
    throw ParseError(std::string("model file: ") + what + " has the wrong row count", 0, 0);
  Eigen::MatrixXd m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    const Json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols)
      throw ParseError(std::string("model file: ") + what + " has the wrong column count",
                       static_cast<std::size_t>(r + 1), 0);
    for (Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (runs < 1) throw UsageError("run count must be >= 1");
  if (workers < 1) throw UsageError("worker count must be >= 1");
  if (dataset.empty()) throw UsageError("no dataset given");
  check_optimizer_name(optimizer);
  if (dendrites < 0) throw UsageError("dendrite count must be >= 1 (or 0 for 10 * C)");
  if (uses_bp()) {
    bp.validate();
    if (variant == Variant::kDnm) throw UsageError("BP training is not provided for DNM");
  } else {
    if (heuristic.algorithm != parse_algorithm(optimizer))
      throw UsageError("heuristic settings belong to a different optimizer");
    heuristic.validate();
  }
  schedule.validate();
  if (!(init_bounds.hi >= init_bounds.lo)) throw UsageError("init_bounds must satisfy lo <= hi");
}

ExperimentConfig default_experiment(std::string_view dataset, Variant variant,
                                    std::string_view optimizer) {
  check_optimizer_name(optimizer);
  ExperimentConfig c;
  c.dataset = std::string(dataset);
  c.variant = variant;
  c.optimizer = std::string(optimizer);
  if (optimizer != "bp") c.heuristic = HeuristicConfig::defaults(parse_algorithm(optimizer));
  c.heuristic.max_iterations = default_iterations(dataset);
  c.heuristic.init_bounds = c.init_bounds;
  if (const DatasetDescriptor* d = find_dataset(dataset)) {
    c.dendrites = d->dendrites;
    c.synaptic_scale = d->synaptic_scale;
    c.telodendron_scale = d->telodendron_scale;
    c.train_count = d->train_count;
    c.test_count = d->test_count;
  }
  return c;
}

ExperimentConfig build_experiment(const std::optional<std::string>& config_json,
                                  const ConfigOverrides& o) {
  Json j = Json::object();
  if (config_json) {
    try {
      j = Json::parse(*config_json);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("config is not valid JSON: ") + e.what(), 0, e.byte);
    }
  }
  auto pick = [&](const std::optional<std::string>& flag, const char* key, const char* fallback) {
    if (flag) return *flag;
    if (j.is_object() && j.contains(key)) return j.at(key).get<std::string>();
    return std::string(fallback);
  };
  const std::string dataset = pick(o.dataset, "dataset", "");
  if (dataset.empty()) throw UsageError("no dataset given (use --dataset or the config's \"dataset\")");
  const Variant variant = parse_variant(pick(o.variant, "variant", "modn"));
  const std::string optimizer = pick(o.optimizer, "optimizer", "bbo");

  ExperimentConfig c = default_experiment(dataset, variant, optimizer);
  if (o.default_data_dir) c.data_dir = *o.default_data_dir;
  apply_json(c, j);
  c.dataset = dataset;
  c.variant = variant;
  c.optimizer = optimizer;
  if (o.runs) c.runs = *o.runs;
  if (o.seed) c.seed = *o.seed;
  if (o.out_dir) c.out_dir = *o.out_dir;
  if (o.data_dir) c.data_dir = *o.data_dir;
  if (o.workers) c.workers = *o.workers;
  if (o.record_time) c.record_time = *o.record_time;
  c.heuristic.init_bounds = c.init_bounds;
  c.validate();
  return c;
}

std::string experiment_to_json(const ExperimentConfig& c) {
  Json j;
  j["dataset"] = c.dataset;
  j["data_dir"] = c.data_dir.string();
  j["variant"] = std::string(to_string(c.variant));
  j["optimizer"] = c.optimizer;
  j["runs"] = c.runs;
  j["seed"] = c.seed;
  j["out"] = c.out_dir.string();
  j["workers"] = c.workers;
  j["record_time"] = c.record_time;
  j["model"] = {{"dendrites", c.dendrites},
                {"synaptic_scale", c.synaptic_scale},
                {"telodendron_scale", c.telodendron_scale},
                {"dnm_soma_scale", c.dnm_soma_scale},
                {"dnm_soma_threshold", c.dnm_soma_threshold}};
  Json split = {{"train", c.train_count}, {"test", c.test_count}, {"has_header", c.schema.has_header}};
  if (c.schema.label_index) split["label_column"] = *c.schema.label_index;
  if (c.schema.label_name) split["label_name"] = *c.schema.label_name;
  split["categorical_columns"] = c.schema.categorical_columns;
  split["ignored_columns"] = c.schema.ignored_columns;
  j["split"] = split;
  j["init_bounds"] = bounds_json(c.init_bounds);
  const HeuristicConfig& h = c.heuristic;
  j["heuristic"] = {
      {"population_size", h.population_size},
      {"max_iterations", h.max_iterations},
      {"search_bounds", bounds_json(h.search_bounds)},
      {"bbo",
       {{"modification_probability", h.bbo.modification_probability},
        {"immigration_bounds", bounds_json(h.bbo.immigration_bounds)},
        {"step_size", h.bbo.step_size},
        {"max_immigration", h.bbo.max_immigration},
        {"max_emigration", h.bbo.max_emigration},
        {"mutation_probability", h.bbo.mutation_probability},
        {"mutation_scale", h.bbo.mutation_scale},
        {"elites", h.bbo.elites}}},
      {"ga",
       {{"bits_per_gene", h.ga.bits_per_gene},
        {"crossover_probability", h.ga.crossover_probability},
        {"mutation_probability", h.ga.mutation_probability},
        {"elites", h.ga.elites}}},
      {"pso",
       {{"inertia", h.pso.inertia},
        {"final_inertia", h.pso.final_inertia},
        {"cognitive", h.pso.cognitive},
        {"social", h.pso.social}}},
      {"pbil",
       {{"bits_per_gene", h.pbil.bits_per_gene},
        {"learning_rate", h.pbil.learning_rate},
        {"negative_learning_rate", h.pbil.negative_learning_rate},
        {"best_individuals", h.pbil.best_individuals},
        {"bad_populations", h.pbil.bad_populations}}},
      {"es", {{"global_variance", h.es.global_variance}, {"new_individuals", h.es.new_individuals}}}};
  j["bp"] = {{"learning_rate", c.bp.learning_rate},
             {"max_iterations", c.bp.max_iterations},
             {"zero_threshold", c.bp.zero_threshold},
             {"dying_mitigation", c.bp.dying_mitigation}};
  j["schedule"] = {{"block_generations", c.schedule.block_generations},
                   {"start_phase", std::string(phase_name(c.schedule.start_phase))}};
  return j.dump(2) + "\n";
}

void AggregateResult::recompute() {
  std::vector<double> acc, auc, loss;
  for (const RunResult& r : runs)
    if (r.ok()) {
      acc.push_back(r.acc);
      auc.push_back(r.auc);
      loss.push_back(r.final_loss);
    }
  completed = acc.size();
  mean_acc = mean(acc);
  mean_auc = mean(auc);
  std_acc = stddev(acc);
  std_auc = stddev(auc);
  mean_final_loss = mean(loss);
}

PreparedExperiment prepare_experiment(const ExperimentConfig& config) {
  config.validate();
  PreparedExperiment p;
  p.config = config;
  const DatasetDescriptor* d = find_dataset(config.dataset);
  std::filesystem::path path;
  CsvSchema schema = config.schema;
  if (d) {
    path = config.data_dir / d->file_name;
    schema = d->schema;
    p.dataset_label = d->name;
  } else {
    path = config.dataset;
    p.dataset_label = path.stem().string();
  }
  if (!std::filesystem::exists(path))
    throw UsageError("dataset file not found: " + path.string() +
                     (d ? " (place the " + d->display_name + " CSV there or pass --data-dir)" : ""));
  p.raw = load_csv(path, schema);

  const auto n = static_cast<std::size_t>(p.raw.rows());
  if (config.train_count + config.test_count == 0) {
    p.train_count = n * 4 / 5;
    p.test_count = n - p.train_count;
  } else {
    p.train_count = config.train_count;
    p.test_count = config.test_count;
  }
  if (p.train_count + p.test_count != n)
    throw UsageError(path.string() + " has " + std::to_string(n) + " rows but the split asks for " +
                     std::to_string(p.train_count) + " + " + std::to_string(p.test_count));
  if (d && (p.raw.dims() != d->dims || p.raw.class_count() != d->classes))
    throw UsageError(path.string() + ": expected " + std::to_string(d->dims) + " features and " +
                     std::to_string(d->classes) + " classes, found " + std::to_string(p.raw.dims()) +
                     " and " + std::to_string(p.raw.class_count()));

  ModelConfig& m = p.model;
  m.variant = config.variant;
  m.input_dim = p.raw.dims();
  const Index classes = p.raw.class_count();
  if (config.variant == Variant::kDnm && classes != 2)
    throw UsageError("DNM is a binary classifier; the dataset has " + std::to_string(classes) + " classes");
  m.output_dim = config.variant == Variant::kDnm ? 1 : classes;
  m.dendrite_count = config.dendrites > 0 ? config.dendrites : 10 * classes;
  m.synaptic_scale = config.synaptic_scale;
  m.telodendron_scale = config.telodendron_scale;
  m.dnm_soma_scale = config.dnm_soma_scale;
  m.dnm_soma_threshold = config.dnm_soma_threshold;
  m.validate();
  return p;
}

RunResult run_single(const PreparedExperiment& prepared, std::uint64_t seed) {
  using Clock = std::chrono::steady_clock;
  const ExperimentConfig& cfg = prepared.config;
  RunResult r;
  r.seed = seed;
  const auto t0 = Clock::now();
  try {
    const auto [train, test] =
        split_and_normalize(prepared.raw, SplitSpec{prepared.train_count, prepared.test_count, seed});
    TrainedModel model;
    if (cfg.uses_bp()) {
      std::optional<PreferenceFilter> frozen;
      if (cfg.variant == Variant::kModn) {
        // BP cannot move P; MODN trains under a random valid filter drawn from the run seed.
        Rng rng(trainer_seed(seed) + 1);
        PreferenceFilter f(prepared.model.dendrite_count, prepared.model.output_dim);
        for (Index j = 0; j < f.dendrites(); ++j) {
          f.set(j, static_cast<Index>(rng.index(static_cast<std::size_t>(f.outputs()))), true);
          for (Index c = 0; c < f.outputs(); ++c)
            if (rng.bernoulli(0.5)) f.set(j, c, true);
        }
        frozen = f;
      }
      model = train_bp(train, prepared.model, cfg.bp, trainer_seed(seed), cfg.init_bounds, frozen);
    } else {
      HeuristicConfig h = cfg.heuristic;
      h.init_bounds = cfg.init_bounds;
      model = train_heuristic(train, prepared.model, h, trainer_seed(seed), cfg.schedule);
    }

    const BatchEvaluator eval(prepared.model, test.features, test.labels);
    const Eigen::MatrixXd probs = eval.probabilities(model.params, model.filter);
    r.acc = accuracy(probs, test.labels);
    if (probs.cols() == 2) {
      std::vector<double> scores(static_cast<std::size_t>(probs.rows()));
      std::vector<std::uint8_t> positive(scores.size());
      for (Index i = 0; i < probs.rows(); ++i) {
        scores[static_cast<std::size_t>(i)] = probs(i, 1);
        positive[static_cast<std::size_t>(i)] = test.labels[static_cast<std::size_t>(i)] == 1;
      }
      const RocResult roc = roc_auc_binary(scores, positive);
      r.roc = roc.curve;
      r.auc = roc.auc;
    } else {
      const RocResult roc = roc_auc_micro(probs, test.labels);
      r.roc = roc.curve;
      r.auc = roc.auc;
    }
    r.loss_curve = model.log.best_fitness;
    r.final_loss = r.loss_curve.empty() ? model.log.best.fitness : r.loss_curve.back();
    r.params = model.params;
    if (cfg.variant == Variant::kModn) r.filter = model.filter;
    if (!std::isfinite(r.acc) || !std::isfinite(r.auc) || !std::isfinite(r.final_loss))
      throw std::runtime_error("non-finite metric");
  } catch (const std::exception& e) {
    RunResult failed;
    failed.seed = seed;
    failed.status = std::string("failed: ") + e.what();
    r = std::move(failed);
  }
  if (cfg.record_time) r.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return r;
}

AggregateResult run_experiment(const ExperimentConfig& config) {
  const PreparedExperiment prepared = prepare_experiment(config);
  AggregateResult agg;
  agg.dataset = prepared.dataset_label;
  agg.variant = config.variant;
  agg.optimizer = config.optimizer;
  agg.model = prepared.model;
  agg.runs.resize(static_cast<std::size_t>(config.runs));

  const auto total = static_cast<std::size_t>(config.runs);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < total; i = next++)
      agg.runs[i] = run_single(prepared, config.seed + static_cast<std::uint64_t>(i));
  };
  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(config.workers), total);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  agg.recompute();
  return agg;
}

WsrtResult compare_experiments(const AggregateResult& a, const AggregateResult& b) {
  if (a.runs.size() != b.runs.size())
    throw UsageError("cannot pair " + std::to_string(a.runs.size()) + " runs with " +
                     std::to_string(b.runs.size()));
  std::vector<double> x, y;
  for (std::size_t i = 0; i < a.runs.size(); ++i)
    if (a.runs[i].ok() && b.runs[i].ok()) {
      x.push_back(a.runs[i].acc);
      y.push_back(b.runs[i].acc);
    }
  if (x.empty()) throw UsageError("no run completed on both sides");
  return wilcoxon_signed_rank(x, y);
}

void export_results(const AggregateResult& result, const std::filesystem::path& dir) {
  make_dir(dir);
  Json summary;
  summary["dataset"] = result.dataset;
  summary["variant"] = std::string(to_string(result.variant));
  summary["optimizer"] = result.optimizer;
  summary["model"] = model_config_json(result.model);
  summary["run_count"] = result.runs.size();
  Json runs = Json::array();
  for (const RunResult& r : result.runs) runs.push_back(run_record(r));
  summary["runs"] = std::move(runs);
  summary["aggregate"] = {{"completed", result.completed},
                          {"failed", result.failed()},
                          {"mean_acc", result.mean_acc},
                          {"mean_auc", result.mean_auc},
                          {"std_acc", result.std_acc},
                          {"std_auc", result.std_auc},
                          {"mean_final_loss", result.mean_final_loss}};
  write_file(dir / "summary.json", summary.dump(2) + "\n");

  std::string csv = "seed,acc,auc,final_loss,wall_seconds,status\n";
  for (const RunResult& r : result.runs)
    csv += std::to_string(r.seed) + "," + num(r.acc) + "," + num(r.auc) + "," + num(r.final_loss) + "," +
           num(r.wall_seconds) + "," + r.status + "\n";
  write_file(dir / "runs.csv", csv);

  bool any_curve = false, any_filter = false;
  for (const RunResult& r : result.runs) {
    any_curve = any_curve || r.ok();
    any_filter = any_filter || (r.ok() && r.filter);
  }
  if (any_curve) {
    make_dir(dir / "curves");
    make_dir(dir / "roc");
    make_dir(dir / "models");
  }
  if (any_filter) make_dir(dir / "filters");

  for (std::size_t i = 0; i < result.runs.size(); ++i) {
    const RunResult& r = result.runs[i];
    if (!r.ok()) continue;
    const std::string tag = run_tag(i);
    std::string curve = "iteration,loss\n";
    for (std::size_t k = 0; k < r.loss_curve.size(); ++k)
      curve += std::to_string(k + 1) + "," + num(r.loss_curve[k]) + "\n";
    write_file(dir / "curves" / ("loss_run_" + tag + ".csv"), curve);

    std::string roc = "fpr,tpr,threshold\n";
    for (const RocPoint& p : r.roc.points)
      roc += num(p.fpr) + "," + num(p.tpr) + "," + num(p.threshold) + "\n";
    write_file(dir / "roc" / ("roc_run_" + tag + ".csv"), roc);

    PreferenceFilter filter = r.filter ? *r.filter : default_filter(result.model);
    if (r.filter) {
      std::string grid;
      for (Index j = 0; j < r.filter->dendrites(); ++j) {
        for (Index c = 0; c < r.filter->outputs(); ++c) grid += (c ? "," : "") + std::string(r.filter->at(j, c) ? "1" : "0");
        grid += "\n";
      }
      write_file(dir / "filters" / ("P_run_" + tag + ".csv"), grid);
    }
    save_model(SavedModel{result.model, r.params, filter}, dir / "models" / ("model_run_" + tag + ".json"));
  }
}

AggregateResult load_summary(const std::filesystem::path& dir) {
  const std::filesystem::path file = dir / "summary.json";
  Json j;
  try {
    j = Json::parse(read_file(file));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(file.string() + ": " + e.what(), 0, e.byte);
  }
  AggregateResult a;
  try {
    a.dataset = j.at("dataset").get<std::string>();
    a.variant = parse_variant(j.at("variant").get<std::string>());
    a.optimizer = j.at("optimizer").get<std::string>();
    a.model = model_config_from_json(j.at("model"));
    for (const Json& r : j.at("runs")) {
      RunResult run;
      run.seed = r.at("seed").get<std::uint64_t>();
      run.acc = r.at("acc").get<double>();
      run.auc = r.at("auc").get<double>();
      run.final_loss = r.at("final_loss").get<double>();
      run.wall_seconds = r.at("wall_seconds").get<double>();
      run.status = r.at("status").get<std::string>();
      a.runs.push_back(std::move(run));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(file.string() + ": " + e.what(), 0, 0);
  }
  a.recompute();
  return a;
}

std::vector<SweepPoint> run_sweep(const ExperimentConfig& base, std::string_view parameter,
                                  const std::vector<double>& values) {
  if (parameter != "M" && parameter != "alpha_s" && parameter != "alpha_t")
    throw UsageError("sweep parameter must be M, alpha_s or alpha_t");
  if (values.empty()) throw UsageError("sweep needs at least one value");
  std::vector<SweepPoint> points;
  std::string table = "parameter,value,mean_acc,mean_auc,std_acc,completed,failed\n";
  for (double v : values) {
    ExperimentConfig c = base;
    if (parameter == "M") {
      if (v < 1 || v != std::floor(v)) throw UsageError("M values must be positive integers");
      c.dendrites = static_cast<Index>(v);
    } else if (parameter == "alpha_s") {
      c.synaptic_scale = v;
    } else {
      c.telodendron_scale = v;
    }
    SweepPoint p{std::string(parameter), v, run_experiment(c)};
    export_results(p.result, base.out_dir / (std::string(parameter) + "_" + num(v)));
    table += std::string(parameter) + "," + num(v) + "," + num(p.result.mean_acc) + "," +
             num(p.result.mean_auc) + "," + num(p.result.std_acc) + "," +
             std::to_string(p.result.completed) + "," + std::to_string(p.result.failed()) + "\n";
    points.push_back(std::move(p));
  }
  make_dir(base.out_dir);
  write_file(base.out_dir / "sweep.csv", table);
  return points;
}

void save_model(const SavedModel& model, const std::filesystem::path& file) {
  Json j;
  j["config"] = model_config_json(model.config);
  j["synaptic_weights"] = matrix_json(model.params.synaptic_weights);
  j["synaptic_thresholds"] = matrix_json(model.params.synaptic_thresholds);
  j["telodendron_weights"] = std::vector<double>(model.params.telodendron_weights.data(),
                                                 model.params.telodendron_weights.data() +
                                                     model.params.telodendron_weights.size());
  j["telodendron_thresholds"] = std::vector<double>(model.params.telodendron_thresholds.data(),
                                                    model.params.telodendron_thresholds.data() +
                                                        model.params.telodendron_thresholds.size());
  j["filter"] = matrix_json(model.filter.matrix());
  write_file(file, j.dump(2) + "\n");
}

SavedModel load_model(const std::filesystem::path& file) {
  Json j;
  try {
    j = Json::parse(read_file(file));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(file.string() + ": " + e.what(), 0, e.byte);
  }
  SavedModel m;
  try {
    m.config = model_config_from_json(j.at("config"));
    m.config.validate();
    const Index d = m.config.input_dim, k = m.config.dendrite_count, t = m.config.telodendron_count();
    m.params = ModelParams::zeros(m.config);
    m.params.synaptic_weights = matrix_from_json(j.at("synaptic_weights"), d, k, "synaptic_weights");
    m.params.synaptic_thresholds = matrix_from_json(j.at("synaptic_thresholds"), d, k, "synaptic_thresholds");
    const auto tw = j.at("telodendron_weights").get<std::vector<double>>();
    const auto tt = j.at("telodendron_thresholds").get<std::vector<double>>();
    if (static_cast<Index>(tw.size()) != t || static_cast<Index>(tt.size()) != t)
      throw ParseError(file.string() + ": telodendron vectors have the wrong length", 0, 0);
    m.params.telodendron_weights = Eigen::Map<const Eigen::VectorXd>(tw.data(), t);
    m.params.telodendron_thresholds = Eigen::Map<const Eigen::VectorXd>(tt.data(), t);
    const Eigen::MatrixXd p = matrix_from_json(j.at("filter"), k, m.config.output_dim, "filter");
    m.filter = PreferenceFilter(k, m.config.output_dim);
    for (Index r = 0; r < k; ++r)
      for (Index c = 0; c < m.config.output_dim; ++c) m.filter.set(r, c, p(r, c) != 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(file.string() + ": " + e.what(), 0, 0);
  }
  m.params.check(m.config);
  return m;
}

std::size_t StateReport::count(SynapseState s) const {
  std::size_t n = 0;
  for (const auto& row : synapses) n += static_cast<std::size_t>(std::count(row.begin(), row.end(), s));
  return n;
}

std::size_t StateReport::count(DendriteState s) const {
  return static_cast<std::size_t>(std::count(dendrites.begin(), dendrites.end(), s));
}

StateReport describe_states(const SavedModel& model) {
  StateReport r;
  const Index d = model.config.input_dim, m = model.config.dendrite_count;
  r.synapses.assign(static_cast<std::size_t>(d), std::vector<SynapseState>(static_cast<std::size_t>(m)));
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < m; ++j)
      r.synapses[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = classify_synapse_state(
          model.params.synaptic_weights(i, j), model.params.synaptic_thresholds(i, j));
  for (Index j = 0; j < m; ++j) r.dendrites.push_back(classify_dendrite_state(model.filter, j));
  return r;
}

std::string format_state_report(const SavedModel& model, const StateReport& report) {
  std::ostringstream out;
  out << "model " << to_string(model.config.variant) << "  D=" << model.config.input_dim
      << " M=" << model.config.dendrite_count << " C=" << model.config.output_dim << "\n\n";
  out << "dendrite  state      filter row   synapse states (input 1..D)\n";
  for (std::size_t j = 0; j < report.dendrites.size(); ++j) {
    char head[32];
    std::snprintf(head, sizeof head, "%8zu  %-10s ", j + 1, std::string(to_string(report.dendrites[j])).c_str());
    out << head;
    std::string row;
    for (Index c = 0; c < model.filter.outputs(); ++c) row += model.filter.at(static_cast<Index>(j), c) ? '1' : '0';
    char padded[64];
    std::snprintf(padded, sizeof padded, "%-12s ", row.c_str());
    out << padded;
    for (std::size_t i = 0; i < report.synapses.size(); ++i)
      out << (i ? " " : "") << to_string(report.synapses[i][j]);
    out << "\n";
  }
  out << "\nsynapses:";
  for (SynapseState s : {SynapseState::kExcitatory, SynapseState::kInhibitory, SynapseState::kUnvarying0,
                         SynapseState::kUnvarying1, SynapseState::kIndeterminate})
    out << " " << to_string(s) << "=" << report.count(s);
  out << "\ndendrites:";
  for (DendriteState s : {DendriteState::kInoperative, DendriteState::kExclusive, DendriteState::kCommunal})
    out << " " << to_string(s) << "=" << report.count(s);
  out << "\n";
  return out.str();
}

}  // namespace modn
