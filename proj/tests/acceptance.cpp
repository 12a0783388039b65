// modn_acceptance [N ...]: runs the numbered acceptance criteria (all of them
// when none are given) and prints one verdict line per criterion.
// Exit status: 0 all passed, 1 something failed, 77 nothing failed but
// something was skipped.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "modn/data.hpp"
#include "modn/errors.hpp"
#include "modn/gradients.hpp"
#include "modn/harness.hpp"
#include "modn/metrics.hpp"
#include "modn/optimizers.hpp"
#include "modn/rng.hpp"
#include "oracles.hpp"

using namespace modn;
namespace fs = std::filesystem;

namespace {

enum class Verdict { kPass, kFail, kSkip };

struct Outcome {
  Verdict verdict = Verdict::kPass;
  std::string detail;
};

Outcome pass(std::string d) { return {Verdict::kPass, std::move(d)}; }
Outcome fail(std::string d) { return {Verdict::kFail, std::move(d)}; }
Outcome skip(std::string d) { return {Verdict::kSkip, std::move(d)}; }
Outcome verdict(bool ok, std::string d) { return {ok ? Verdict::kPass : Verdict::kFail, std::move(d)}; }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

int workers() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

bool have_data(const std::string& dataset) {
  const DatasetDescriptor* d = find_dataset(dataset);
  return d && fs::exists(fs::path(MODN_TEST_DATA_DIR) / d->file_name);
}

ExperimentConfig experiment(const std::string& dataset, const std::string& variant,
                            const std::string& optimizer, std::uint64_t seed, int runs = 30) {
  ConfigOverrides o;
  o.dataset = dataset;
  o.variant = variant;
  o.optimizer = optimizer;
  o.default_data_dir = MODN_TEST_DATA_DIR;
  o.seed = seed;
  o.runs = runs;
  o.workers = workers();
  return build_experiment(std::nullopt, o);
}

std::string summary(const AggregateResult& r) {
  return fmt("ACC %.4f (sd %.4f), AUC %.4f, %zu/%zu runs", r.mean_acc, r.std_acc, r.mean_auc, r.completed,
             r.runs.size());
}

// ---- model and gradient properties --------------------------------------

struct RandomModel {
  ModelConfig config;
  ModelParams params;
  PreferenceFilter filter;
  Eigen::MatrixXd x, y;
};

RandomModel random_model(Rng& rng, Variant variant, Index samples) {
  static constexpr double kSyn[] = {1.0, 5.0, 10.0};
  static constexpr double kTel[] = {0.5, 1.0, 1.5};
  RandomModel m;
  m.config.variant = variant;
  m.config.input_dim = 2 + static_cast<Index>(rng.index(4));
  m.config.output_dim = 1 + static_cast<Index>(rng.index(4));
  if (variant == Variant::kModnp) {
    std::vector<Index> ok;
    for (Index v = 2; v <= 8; ++v)
      if (v % m.config.output_dim == 0) ok.push_back(v);
    m.config.dendrite_count = ok[rng.index(ok.size())];
  } else {
    m.config.dendrite_count = 2 + static_cast<Index>(rng.index(7));
  }
  m.config.synaptic_scale = kSyn[rng.index(3)];
  m.config.telodendron_scale = kTel[rng.index(3)];
  m.params = ModelParams::random(m.config, rng);
  m.filter = default_filter(m.config);
  m.x.resize(samples, m.config.input_dim);
  m.y = Eigen::MatrixXd::Zero(samples, m.config.output_dim);
  for (Index n = 0; n < samples; ++n) {
    for (Index i = 0; i < m.config.input_dim; ++i) m.x(n, i) = rng.uniform();
    m.y(n, static_cast<Index>(rng.index(static_cast<std::size_t>(m.config.output_dim)))) = 1.0;
  }
  return m;
}

Outcome gradient_fidelity() {
  Rng rng(2024);
  BpConfig bp;
  bp.zero_threshold = 1e-300;  // no substitution, so the partials are exact
  double worst_abs = 0.0, worst_rel = 0.0;
  std::size_t checked = 0, bad = 0;
  std::string first_bad;
  for (int trial = 0; trial < 50; ++trial) {
    for (Variant v : {Variant::kModnp, Variant::kModnf}) {
      const RandomModel m = random_model(rng, v, 4);
      const GradientSet a = batch_gradients(m.params, m.x, m.y, m.filter, m.config, bp);
      const GradientSet f = finite_difference_oracle(m.params, m.filter, m.config, m.x, m.y, 1e-6);
      auto compare = [&](const Eigen::MatrixXd& g, const Eigen::MatrixXd& o, const char* what) {
        for (Index i = 0; i < g.size(); ++i) {
          const double diff = std::abs(g(i) - o(i));
          const double rel = diff / std::max(std::abs(g(i)), std::abs(o(i)));
          ++checked;
          worst_abs = std::max(worst_abs, diff);
          if (std::abs(o(i)) > 1e-6) worst_rel = std::max(worst_rel, rel);
          if (diff >= 1e-8 && rel >= 1e-4 && bad++ == 0)
            first_bad = fmt("trial %d %s %s[%td]: %.3e vs %.3e", trial, std::string(to_string(v)).c_str(), what,
                            i, g(i), o(i));
        }
      };
      compare(a.d_synaptic_weights, f.d_synaptic_weights, "w_s");
      compare(a.d_synaptic_thresholds, f.d_synaptic_thresholds, "t_s");
      compare(a.d_telodendron_weights, f.d_telodendron_weights, "w_t");
      compare(a.d_telodendron_thresholds, f.d_telodendron_thresholds, "t_t");
    }
  }
  if (bad) return fail(fmt("%zu of %zu partials off; first %s", bad, checked, first_bad.c_str()));
  return pass(fmt("%zu partials over 100 models; max abs error %.2e, max rel error %.2e where |g| > 1e-6", checked,
                  worst_abs, worst_rel));
}

Outcome dying_dendrite() {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    ModelConfig cfg;
    cfg.variant = Variant::kModnf;
    cfg.input_dim = 3 + static_cast<Index>(rng.index(3));
    cfg.dendrite_count = 2 + static_cast<Index>(rng.index(5));
    cfg.output_dim = 2 + static_cast<Index>(rng.index(3));
    ModelParams p = ModelParams::random(cfg, rng);
    const Index dead = static_cast<Index>(rng.index(static_cast<std::size_t>(cfg.dendrite_count)));
    const Index a = static_cast<Index>(rng.index(static_cast<std::size_t>(cfg.input_dim)));
    const Index b = (a + 1 + static_cast<Index>(rng.index(static_cast<std::size_t>(cfg.input_dim - 1)))) % cfg.input_dim;
    Eigen::VectorXd x(cfg.input_dim);
    for (Index i = 0; i < cfg.input_dim; ++i) x(i) = rng.uniform();
    // w x - theta <= -2 on both synapses, so Y <= sigma(-20) < 1e-6.
    for (Index i : {a, b}) {
      p.synaptic_weights(i, dead) = -1.0;
      p.synaptic_thresholds(i, dead) = 2.0 + rng.uniform();
    }
    const PreferenceFilter filter = default_filter(cfg);
    const ForwardTrace t = forward(x, p, filter, cfg);
    if (t.synaptic_outputs(a, dead) >= 1e-6 || t.synaptic_outputs(b, dead) >= 1e-6)
      return fail(fmt("seed %llu: construction did not reach 1e-6", static_cast<unsigned long long>(seed)));
    Eigen::VectorXd label = Eigen::VectorXd::Zero(cfg.output_dim);
    label(static_cast<Index>(rng.index(static_cast<std::size_t>(cfg.output_dim)))) = 1.0;

    BpConfig bp;
    bp.dying_mitigation = false;
    const auto [gw0, gt0] = synaptic_gradients(t, label, p, filter, cfg, bp);
    bp.dying_mitigation = true;
    const auto [gw1, gt1] = synaptic_gradients(t, label, p, filter, cfg, bp);
    const bool zeros = (gw0.col(dead).array() == 0.0).all() && (gt0.col(dead).array() == 0.0).all();
    const bool alive = (gw1.col(dead).array() != 0.0).any() && (gt1.col(dead).array() != 0.0).any();
    if (!zeros) return fail(fmt("seed %llu: mitigation off left %.3e", static_cast<unsigned long long>(seed),
                                gw0.col(dead).cwiseAbs().maxCoeff()));
    if (!alive) return fail(fmt("seed %llu: mitigation on still all zero", static_cast<unsigned long long>(seed)));
  }
  return pass("20 seeds: exact zeros without mitigation, non-zero with it");
}

Outcome filter_invariants() {
  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const RandomModel m = random_model(rng, Variant::kModnf, 1);
    const ForwardTrace t = forward(m.x.row(0).transpose(), m.params, m.filter, m.config);
    const double sum = t.dendrite_outputs.sum();
    for (Index c = 0; c < m.config.output_dim; ++c)
      if (std::abs(t.soma_outputs(c) - t.soma_outputs(0)) > 1e-12 * std::max(1.0, sum) ||
          std::abs(t.soma_outputs(c) - sum) > 1e-12 * std::max(1.0, sum))
        return fail(fmt("MODNF trial %d: V_%td = %.17g, sum Z = %.17g", trial, c, t.soma_outputs(c), sum));
  }
  for (int trial = 0; trial < 100; ++trial) {
    RandomModel m = random_model(rng, Variant::kModnp, 1);
    const Index per = m.config.dendrite_count / m.config.output_dim;
    const Eigen::VectorXd x = m.x.row(0).transpose();
    const ForwardTrace t = forward(x, m.params, m.filter, m.config);
    for (Index c = 0; c < m.config.output_dim; ++c) {
      const double block = t.dendrite_outputs.segment(c * per, per).sum();
      if (std::abs(t.soma_outputs(c) - block) > 1e-12)
        return fail(fmt("MODNP trial %d: V_%td is not its block sum", trial, c));
    }
    // Moving one dendrite may only change the soma output it belongs to.
    const Index j = static_cast<Index>(rng.index(static_cast<std::size_t>(m.config.dendrite_count)));
    m.params.synaptic_thresholds.col(j).array() += 0.3;
    const ForwardTrace u = forward(x, m.params, m.filter, m.config);
    for (Index c = 0; c < m.config.output_dim; ++c)
      if (c != j / per && u.soma_outputs(c) != t.soma_outputs(c))
        return fail(fmt("MODNP trial %d: dendrite %td leaked into output %td", trial, j, c));
  }
  return pass("100 MODNF and 100 MODNP forward passes");
}

// ---- metrics ---------------------------------------------------------------

Outcome auc_oracle() {
  Rng rng(4);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 5 + rng.index(46);
    std::vector<double> s(n);
    std::vector<std::uint8_t> pos(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = rng.uniform();
      pos[i] = rng.bernoulli(0.4);
    }
    for (std::size_t i = 0; i < n / 3; ++i) s[rng.index(n)] = s[rng.index(n)];
    const std::size_t k = rng.index(n);
    pos[k] = 1;
    pos[(k + 1) % n] = 0;
    const double diff = std::abs(roc_auc_binary(s, pos).auc - oracle::pairwise_auc(s, pos));
    worst = std::max(worst, diff);
  }
  return verdict(worst <= 1e-12, fmt("100 score sets, max |AUC - pairwise| = %.2e", worst));
}

Outcome wsrt_oracle() {
  Rng rng(5);
  double worst_p = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> a1(30), a2(30);
    for (std::size_t i = 0; i < 30; ++i) {
      // Dyadic grid: equal |d| are equal bit for bit, so ties are unambiguous.
      a1[i] = static_cast<double>(rng.index(33)) / 32.0;
      a2[i] = rng.bernoulli(0.15) ? a1[i] : static_cast<double>(rng.index(33)) / 32.0;
    }
    const WsrtResult r = wilcoxon_signed_rank(a1, a2);
    const oracle::Wsrt o = oracle::signed_rank(a1, a2);
    if (r.t_effective != o.t || std::abs(r.w_plus - o.w_plus) > 1e-9 || std::abs(r.w_minus - o.w_minus) > 1e-9)
      return fail(fmt("trial %d: W+ %.1f/%.1f, W- %.1f/%.1f", trial, r.w_plus, o.w_plus, r.w_minus, o.w_minus));
    worst_p = std::max(worst_p, std::abs(r.p_value - o.p));
  }
  return verdict(worst_p <= 1e-12, fmt("100 samples, W+/W- exact, max |p - naive p| = %.2e", worst_p));
}

// ---- optimizers ------------------------------------------------------------

Outcome optimizer_sphere() {
  const int budget = default_iterations("sphere");
  auto sphere = [](std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return s;
  };
  std::string detail;
  bool ok = true;
  for (auto [name, target] : {std::pair{"bbo", 1e-2}, {"pso", 1e-2}, {"es", 1e-2}, {"ga", 0.1}}) {
    HeuristicConfig c = HeuristicConfig::defaults(parse_algorithm(name));
    c.max_iterations = budget;
    int hits = 0;
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const TrainingLog log = search([&](const Candidate& k) { return sphere(k.continuous_genes); },
                                     SearchSpace{5, 0, 0}, c, seed);
      worst = std::max(worst, log.best.fitness);
      hits += log.best.fitness < target;
    }
    ok = ok && hits == 10;
    detail += fmt("%s%s %d/10 (worst %.1e)", detail.empty() ? "" : ", ", name, hits, worst);
  }
  return verdict(ok, fmt("%d generations: ", budget) + detail);
}

// ---- reproduction ----------------------------------------------------------

// Reference figures are the registry's published MODNF + BBO scores.
Outcome reproduce(const std::string& dataset, double acc_tol, double auc_tol) {
  if (!have_data(dataset)) return skip(dataset + ".csv not found in the data directory");
  const ReferenceScore ref = find_dataset(dataset)->modnf;
  const AggregateResult r = run_experiment(experiment(dataset, "modnf", "bbo", 1));
  bool ok = r.completed == 30 && std::abs(r.mean_acc - ref.acc) <= acc_tol;
  std::string target = fmt("; target ACC %.4f +- %.2f", ref.acc, acc_tol);
  if (auc_tol > 0.0) {
    ok = ok && std::abs(r.mean_auc - ref.auc) <= auc_tol;
    target += fmt(", AUC %.4f +- %.2f", ref.auc, auc_tol);
  }
  return verdict(ok, "MODNF + BBO " + summary(r) + target);
}

Outcome iris_reproduction() { return reproduce("iris", 0.08, 0.05); }

Outcome breast_reproduction() {
  if (!have_data("breast_cancer")) return skip("breast_cancer.csv not found");
  const AggregateResult r = run_experiment(experiment("breast_cancer", "modnf", "bbo", 1));
  return verdict(r.completed == 30 && r.mean_acc >= 0.95, "MODNF + BBO " + summary(r) + "; target ACC >= 0.95");
}

Outcome blood_reproduction() { return reproduce("blood_transfusion", 0.06, 0.0); }

// Majority over three 30-run batches of BBO versus GA.
std::pair<bool, std::string> bbo_over_ga(const std::string& dataset) {
  int wins = 0;
  std::string d;
  for (std::uint64_t seed : {1, 101, 201}) {
    const AggregateResult bbo = run_experiment(experiment(dataset, "modn", "bbo", seed));
    const AggregateResult ga = run_experiment(experiment(dataset, "modn", "ga", seed));
    wins += bbo.mean_acc > ga.mean_acc;
    d += fmt("%s%.4f vs %.4f", d.empty() ? "" : ", ", bbo.mean_acc, ga.mean_acc);
  }
  return {wins >= 2, dataset + " BBO vs GA " + d + fmt(" (%d/3)", wins)};
}

Outcome bbo_beats_ga() {
  if (!have_data("iris")) return skip("iris.csv not found");
  const auto [iris_ok, iris] = bbo_over_ga("iris");
  if (!iris_ok) return fail(iris);
  if (!have_data("seeds")) return skip(iris + "; seeds.csv not found, so the Seeds half was not run");
  const auto [seeds_ok, seeds] = bbo_over_ga("seeds");
  return verdict(seeds_ok, iris + "; " + seeds);
}

Outcome bp_gap() {
  if (!have_data("iris")) return skip("iris.csv not found");
  const AggregateResult bp = run_experiment(experiment("iris", "modnf", "bp", 1));
  const AggregateResult bbo = run_experiment(experiment("iris", "modnf", "bbo", 1));
  const double gap = bbo.mean_acc - bp.mean_acc;
  return verdict(bp.completed == 30 && bbo.completed == 30 && gap >= 0.15,
                 fmt("Iris MODNF: BP ACC %.4f, BBO ACC %.4f, gap %.4f (need >= 0.15)", bp.mean_acc, bbo.mean_acc, gap));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism() {
  if (!have_data("iris")) return skip("iris.csv not found");
  const fs::path root = fs::temp_directory_path() / "modn_acceptance_determinism";
  fs::remove_all(root);
  std::vector<std::string> variants{"modn", "modnf"};
  std::size_t files = 0;
  for (const std::string& v : variants) {
    ConfigOverrides o;
    o.dataset = "iris";
    o.variant = v;
    o.default_data_dir = MODN_TEST_DATA_DIR;
    o.runs = 3;
    o.seed = 7;
    const std::string cfg = R"({"heuristic": {"max_iterations": 25}})";
    o.workers = 1;
    const AggregateResult a = run_experiment(build_experiment(cfg, o));
    o.workers = 2;
    const AggregateResult b = run_experiment(build_experiment(cfg, o));
    export_results(a, root / v / "a");
    export_results(b, root / v / "b");
    for (const auto& e : fs::recursive_directory_iterator(root / v / "a")) {
      if (!e.is_regular_file()) continue;
      const fs::path rel = fs::relative(e.path(), root / v / "a");
      ++files;
      if (!fs::exists(root / v / "b" / rel) || slurp(e.path()) != slurp(root / v / "b" / rel))
        return fail(v + ": exported " + rel.string() + " differs between re-runs");
    }
  }
  fs::remove_all(root);
  return pass(fmt("%zu exported files byte-identical across re-runs (1 and 2 workers)", files));
}

struct Criterion {
  const char* name;
  std::function<Outcome()> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all{
      {"gradient_fidelity", gradient_fidelity},     {"dying_dendrite", dying_dendrite},
      {"filter_invariants", filter_invariants},     {"auc_oracle", auc_oracle},
      {"wsrt_oracle", wsrt_oracle},                 {"optimizer_sphere", optimizer_sphere},
      {"iris_reproduction", iris_reproduction},     {"breast_reproduction", breast_reproduction},
      {"blood_reproduction", blood_reproduction},   {"bbo_beats_ga", bbo_beats_ga},
      {"bp_gap", bp_gap},                           {"determinism", determinism},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::size_t> which;
  for (int i = 1; i < argc; ++i) {
    const int n = std::atoi(argv[i]);
    if (n < 1 || n > static_cast<int>(criteria().size())) {
      std::fprintf(stderr, "usage: %s [1-%zu ...]\n", argv[0], criteria().size());
      return 2;
    }
    which.push_back(static_cast<std::size_t>(n));
  }
  if (which.empty())
    for (std::size_t n = 1; n <= criteria().size(); ++n) which.push_back(n);

  bool failed = false, skipped = false;
  for (std::size_t n : which) {
    const Criterion& c = criteria()[n - 1];
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = fail(std::string("exception: ") + e.what());
    }
    const char* tag = o.verdict == Verdict::kPass ? "PASS" : o.verdict == Verdict::kFail ? "FAIL" : "SKIP";
    std::printf("criterion %zu %s: %s (%s)\n", n, c.name, tag, o.detail.c_str());
    std::fflush(stdout);
    failed = failed || o.verdict == Verdict::kFail;
    skipped = skipped || o.verdict == Verdict::kSkip;
  }
  return failed ? 1 : skipped ? 77 : 0;
}
