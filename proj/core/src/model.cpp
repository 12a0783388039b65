#include "modn/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

#include "modn/errors.hpp"

namespace modn {
namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

void require_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

}  // namespace

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::kDnm: return "dnm";
    case Variant::kModn: return "modn";
    case Variant::kModnp: return "modnp";
    case Variant::kModnf: return "modnf";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  const std::string n = lower(name);
  if (n == "dnm") return Variant::kDnm;
  if (n == "modn") return Variant::kModn;
  if (n == "modnp") return Variant::kModnp;
  if (n == "modnf") return Variant::kModnf;
  throw UsageError("unknown model variant '" + std::string(name) + "'");
}

std::string_view to_string(SynapseState s) {
  switch (s) {
    case SynapseState::kExcitatory: return "excitatory";
    case SynapseState::kInhibitory: return "inhibitory";
    case SynapseState::kUnvarying0: return "unvarying-0";
    case SynapseState::kUnvarying1: return "unvarying-1";
    case SynapseState::kIndeterminate: return "indeterminate";
  }
  return "?";
}

std::string_view to_string(DendriteState s) {
  switch (s) {
    case DendriteState::kInoperative: return "inoperative";
    case DendriteState::kExclusive: return "exclusive";
    case DendriteState::kCommunal: return "communal";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// ModelConfig

void ModelConfig::validate() const {
  if (input_dim < 1 || dendrite_count < 1 || output_dim < 1)
    throw UsageError("model dimensions D, M, C must all be >= 1");
  if (!(synaptic_scale > 0.0) || !std::isfinite(synaptic_scale))
    throw UsageError("synaptic scale must be positive and finite");
  if (!(telodendron_scale > 0.0) || !std::isfinite(telodendron_scale))
    throw UsageError("telodendron scale must be positive and finite");
  if (variant == Variant::kDnm) {
    if (output_dim != 1) throw UsageError("DNM has a single output (C = 1)");
    if (!(dnm_soma_scale > 0.0) || !std::isfinite(dnm_soma_scale))
      throw UsageError("DNM soma scale must be positive and finite");
    if (!std::isfinite(dnm_soma_threshold))
      throw UsageError("DNM soma threshold must be finite");
  }
  if (variant == Variant::kModnp && dendrite_count % output_dim != 0)
    throw UsageError("MODNP needs the dendrite count M divisible by the output count C (M=" +
                     std::to_string(dendrite_count) + ", C=" + std::to_string(output_dim) + ")");
}

Index ModelConfig::class_count() const { return variant == Variant::kDnm ? 2 : output_dim; }

Index ModelConfig::telodendron_count() const {
  return variant == Variant::kDnm ? 0 : output_dim;
}

Index ModelConfig::continuous_gene_count() const {
  return 2 * input_dim * dendrite_count + 2 * telodendron_count();
}

Index ModelConfig::filter_bit_count() const {
  return variant == Variant::kModn ? dendrite_count * output_dim : 0;
}

// ---------------------------------------------------------------------------
// ModelParams

ModelParams ModelParams::zeros(const ModelConfig& config) {
  const Index d = config.input_dim, m = config.dendrite_count, t = config.telodendron_count();
  return ModelParams{Eigen::MatrixXd::Zero(d, m), Eigen::MatrixXd::Zero(d, m),
                     Eigen::VectorXd::Zero(t), Eigen::VectorXd::Zero(t)};
}

ModelParams ModelParams::random(const ModelConfig& config, Rng& rng, double lo, double hi) {
  ModelParams p = zeros(config);
  auto fill = [&](auto& m) {
    for (Index k = 0; k < m.size(); ++k) m.data()[k] = rng.uniform(lo, hi);
  };
  fill(p.synaptic_weights);
  fill(p.synaptic_thresholds);
  fill(p.telodendron_weights);
  fill(p.telodendron_thresholds);
  return p;
}

ModelParams ModelParams::from_genes(const ModelConfig& config, std::span<const double> genes) {
  if (static_cast<Index>(genes.size()) != config.continuous_gene_count())
    throw ShapeError("gene vector has " + std::to_string(genes.size()) + " entries, expected " +
                     std::to_string(config.continuous_gene_count()));
  ModelParams p = zeros(config);
  const double* g = genes.data();
  auto take = [&](auto& m) {
    std::copy(g, g + m.size(), m.data());
    g += m.size();
  };
  take(p.synaptic_weights);
  take(p.synaptic_thresholds);
  take(p.telodendron_weights);
  take(p.telodendron_thresholds);
  return p;
}

std::vector<double> ModelParams::to_genes() const {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(2 * synaptic_weights.size() + 2 * telodendron_weights.size()));
  auto put = [&](const auto& m) { out.insert(out.end(), m.data(), m.data() + m.size()); };
  put(synaptic_weights);
  put(synaptic_thresholds);
  put(telodendron_weights);
  put(telodendron_thresholds);
  return out;
}

void ModelParams::check(const ModelConfig& config) const {
  const Index d = config.input_dim, m = config.dendrite_count, t = config.telodendron_count();
  require_shape(synaptic_weights.rows() == d && synaptic_weights.cols() == m,
                "synaptic weights must be D x M");
  require_shape(synaptic_thresholds.rows() == d && synaptic_thresholds.cols() == m,
                "synaptic thresholds must be D x M");
  require_shape(telodendron_weights.size() == t && telodendron_thresholds.size() == t,
                "telodendron parameters must have length C");
  const bool finite = synaptic_weights.allFinite() && synaptic_thresholds.allFinite() &&
                      telodendron_weights.allFinite() && telodendron_thresholds.allFinite();
  if (!finite) throw UsageError("model parameters contain non-finite entries");
}

// ---------------------------------------------------------------------------
// PreferenceFilter

PreferenceFilter::PreferenceFilter(Index dendrites, Index outputs)
    : matrix_(Eigen::MatrixXd::Zero(dendrites, outputs)) {
  if (dendrites < 1 || outputs < 1) throw ShapeError("preference filter must be at least 1 x 1");
}

PreferenceFilter PreferenceFilter::all_ones(Index dendrites, Index outputs) {
  PreferenceFilter f(dendrites, outputs);
  f.matrix_.setOnes();
  return f;
}

PreferenceFilter PreferenceFilter::partition(Index dendrites, Index outputs) {
  if (dendrites % outputs != 0)
    throw UsageError("partition filter needs M divisible by C");
  PreferenceFilter f(dendrites, outputs);
  for (Index j = 0; j < dendrites; ++j) {
    // ceil((j + 1) * C / M), converted to a 0-based column.
    const Index group = ((j + 1) * outputs + dendrites - 1) / dendrites - 1;
    f.matrix_(j, group) = 1.0;
  }
  return f;
}

PreferenceFilter PreferenceFilter::from_bits(Index dendrites, Index outputs,
                                             std::span<const std::uint8_t> bits) {
  if (static_cast<Index>(bits.size()) != dendrites * outputs)
    throw ShapeError("filter bit vector must have M*C entries");
  PreferenceFilter f(dendrites, outputs);
  for (Index j = 0; j < dendrites; ++j)
    for (Index c = 0; c < outputs; ++c)
      f.matrix_(j, c) = bits[static_cast<std::size_t>(j * outputs + c)] ? 1.0 : 0.0;
  return f;
}

DendriteState PreferenceFilter::dendrite_state(Index j) const {
  if (j < 0 || j >= dendrites())
    throw std::out_of_range("dendrite index " + std::to_string(j) + " outside [0, " +
                            std::to_string(dendrites()) + ")");
  const double ones = matrix_.row(j).sum();
  if (ones == 0.0) return DendriteState::kInoperative;
  if (ones == 1.0) return DendriteState::kExclusive;
  return DendriteState::kCommunal;
}

bool PreferenceFilter::is_all_ones() const { return matrix_.size() > 0 && (matrix_.array() == 1.0).all(); }

bool PreferenceFilter::is_partition() const {
  if (matrix_.size() == 0 || dendrites() % outputs() != 0) return false;
  return *this == partition(dendrites(), outputs());
}

bool PreferenceFilter::has_inoperative_row() const {
  for (Index j = 0; j < dendrites(); ++j)
    if (matrix_.row(j).sum() == 0.0) return true;
  return false;
}

std::vector<std::uint8_t> PreferenceFilter::bits() const {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(matrix_.size()));
  for (Index j = 0; j < dendrites(); ++j)
    for (Index c = 0; c < outputs(); ++c)
      out[static_cast<std::size_t>(j * outputs() + c)] = at(j, c) ? 1 : 0;
  return out;
}

PreferenceFilter default_filter(const ModelConfig& config) {
  switch (config.variant) {
    case Variant::kDnm:
    case Variant::kModnf: return PreferenceFilter::all_ones(config.dendrite_count, config.output_dim);
    case Variant::kModnp: return PreferenceFilter::partition(config.dendrite_count, config.output_dim);
    case Variant::kModn: break;
  }
  throw UsageError("MODN learns its preference filter; there is no default");
}

// ---------------------------------------------------------------------------
// Layers

Eigen::MatrixXd synaptic_forward(const Eigen::Ref<const Eigen::VectorXd>& x,
                                 const ModelParams& params, const ModelConfig& config) {
  params.check(config);
  require_shape(x.size() == config.input_dim, "input length must equal D");
  const Eigen::ArrayXXd arg =
      config.synaptic_scale *
      (params.synaptic_weights.array().colwise() * x.array() - params.synaptic_thresholds.array());
  return (1.0 / (1.0 + (-arg).exp())).matrix();
}

// Strict inequalities throughout; ties and zeros fall through to
// Indeterminate.
SynapseState classify_synapse_state(double w, double t) {
  if (w > 0.0 && t > 0.0) {
    if (w > t) return SynapseState::kExcitatory;
    if (t > w) return SynapseState::kUnvarying0;
  } else if (w < 0.0 && t < 0.0) {
    if (w < t) return SynapseState::kInhibitory;
    if (t < w) return SynapseState::kUnvarying1;
  } else if (t > 0.0 && w < 0.0) {
    return SynapseState::kUnvarying0;
  } else if (t < 0.0 && w > 0.0) {
    return SynapseState::kUnvarying1;
  }
  return SynapseState::kIndeterminate;
}

Eigen::VectorXd dendrite_forward(const Eigen::Ref<const Eigen::MatrixXd>& y) {
  return y.colwise().prod().transpose();
}

Eigen::VectorXd soma_filter(const Eigen::Ref<const Eigen::VectorXd>& z,
                            const PreferenceFilter& filter) {
  require_shape(z.size() == filter.dendrites(), "dendrite output length must equal filter rows");
  return filter.matrix().transpose() * z;
}

DendriteState classify_dendrite_state(const PreferenceFilter& filter, Index j) {
  return filter.dendrite_state(j);
}

Eigen::VectorXd telodendron_forward(const Eigen::Ref<const Eigen::VectorXd>& v,
                                    const ModelParams& params, const ModelConfig& config) {
  require_shape(v.size() == config.output_dim && params.telodendron_weights.size() == v.size() &&
                    params.telodendron_thresholds.size() == v.size(),
                "telodendron input length must equal C");
  return (config.telodendron_scale *
          (params.telodendron_weights.array() * v.array() - params.telodendron_thresholds.array()))
      .tanh()
      .matrix();
}

Eigen::VectorXd target_cell_softmax(const Eigen::Ref<const Eigen::VectorXd>& r) {
  if (r.size() < 1) throw ShapeError("softmax needs at least one input");
  const Eigen::ArrayXd e = (r.array() - r.maxCoeff()).exp();
  return (e / e.sum()).matrix();
}

double dnm_soma_forward(double v, const ModelConfig& config) {
  if (config.variant != Variant::kDnm)
    throw UsageError("the sigmoid soma belongs to the DNM variant only");
  return sigmoid(config.dnm_soma_scale * (v - config.dnm_soma_threshold));
}

ForwardTrace forward(const Eigen::Ref<const Eigen::VectorXd>& x, const ModelParams& params,
                     const PreferenceFilter& filter, const ModelConfig& config) {
  ForwardTrace t;
  t.input = x;
  t.synaptic_outputs = synaptic_forward(x, params, config);
  t.dendrite_outputs = dendrite_forward(t.synaptic_outputs);
  if (config.variant == Variant::kDnm) {
    const double v = t.dendrite_outputs.sum();
    const double o = dnm_soma_forward(v, config);
    t.soma_outputs = Eigen::VectorXd::Constant(1, v);
    t.class_probs = Eigen::Vector2d(1.0 - o, o);
    return t;
  }
  require_shape(filter.dendrites() == config.dendrite_count && filter.outputs() == config.output_dim,
                "preference filter must be M x C");
  t.soma_outputs = soma_filter(t.dendrite_outputs, filter);
  t.telodendron_outputs = telodendron_forward(t.soma_outputs, params, config);
  t.class_probs = target_cell_softmax(t.telodendron_outputs);
  return t;
}

double cross_entropy_loss(std::span<const ForwardTrace> traces,
                          const Eigen::Ref<const Eigen::MatrixXd>& targets) {
  if (traces.empty()) throw UsageError("cross-entropy needs at least one sample");
  require_shape(static_cast<Index>(traces.size()) == targets.rows(),
                "one target row per trace is required");
  double total = 0.0;
  for (std::size_t n = 0; n < traces.size(); ++n) {
    const Eigen::VectorXd& o = traces[n].class_probs;
    require_shape(o.size() == targets.cols(), "target width must equal class count");
    for (Index c = 0; c < o.size(); ++c) {
      const double hot = targets(static_cast<Index>(n), c);
      if (hot != 0.0) total -= hot * std::log(std::max(o(c), kLogFloor));
    }
  }
  return total / static_cast<double>(traces.size());
}

// ---------------------------------------------------------------------------
// BatchEvaluator

BatchEvaluator::BatchEvaluator(ModelConfig config, Eigen::MatrixXd features,
                               std::vector<Index> labels)
    : config_(std::move(config)), features_(std::move(features)), labels_(std::move(labels)) {
  config_.validate();
  require_shape(features_.cols() == config_.input_dim, "feature matrix must have D columns");
  require_shape(static_cast<Index>(labels_.size()) == features_.rows(),
                "one label per feature row is required");
  for (Index l : labels_)
    if (l < 0 || l >= config_.class_count()) throw ShapeError("label outside the class range");
}

template <typename Sink>
void BatchEvaluator::run(std::span<const double> genes, const PreferenceFilter& filter,
                         Sink&& sink) const {
  const Index d = config_.input_dim, m = config_.dendrite_count, t = config_.telodendron_count();
  require_shape(static_cast<Index>(genes.size()) == config_.continuous_gene_count(),
                "gene vector length does not match the model");
  const bool dnm = config_.variant == Variant::kDnm;
  if (!dnm)
    require_shape(filter.dendrites() == m && filter.outputs() == config_.output_dim,
                  "preference filter must be M x C");

  using ConstMat = Eigen::Map<const Eigen::MatrixXd>;
  using ConstVec = Eigen::Map<const Eigen::VectorXd>;
  const double* g = genes.data();
  const Eigen::ArrayXXd w = config_.synaptic_scale * ConstMat(g, d, m).array();
  const Eigen::ArrayXXd th = config_.synaptic_scale * ConstMat(g + d * m, d, m).array();
  const Eigen::ArrayXd wt = config_.telodendron_scale * ConstVec(g + 2 * d * m, t).array();
  const Eigen::ArrayXd tt = config_.telodendron_scale * ConstVec(g + 2 * d * m + t, t).array();

  // Sample-major: each synapse is one long vectorised pass over the batch.
  const Index samples = features_.rows();
  Eigen::ArrayXXd z = Eigen::ArrayXXd::Ones(samples, m);
  for (Index j = 0; j < m; ++j)
    for (Index i = 0; i < d; ++i)
      z.col(j) *= 1.0 / (1.0 + (th(i, j) - w(i, j) * features_.col(i).array()).exp());

  Eigen::VectorXd probs(config_.class_count());
  if (dnm) {
    const Eigen::ArrayXd soma = z.rowwise().sum();
    for (Index n = 0; n < samples; ++n) {
      const double o = sigmoid(config_.dnm_soma_scale * (soma(n) - config_.dnm_soma_threshold));
      probs(0) = 1.0 - o;
      probs(1) = o;
      sink(n, probs);
    }
    return;
  }
  const Eigen::ArrayXXd v = (z.matrix() * filter.matrix()).array();
  const Eigen::ArrayXXd r = (v.rowwise() * wt.transpose() - tt.transpose().replicate(samples, 1)).tanh();
  for (Index n = 0; n < samples; ++n) {
    const Eigen::ArrayXd row = r.row(n).transpose();
    const Eigen::ArrayXd e = (row - row.maxCoeff()).exp();
    probs = (e / e.sum()).matrix();
    sink(n, probs);
  }
}

double BatchEvaluator::loss(std::span<const double> genes, const PreferenceFilter& filter) const {
  double total = 0.0;
  run(genes, filter, [&](Index n, const Eigen::VectorXd& probs) {
    total -= std::log(std::max(probs(labels_[static_cast<std::size_t>(n)]), kLogFloor));
  });
  return total / static_cast<double>(features_.rows());
}

double BatchEvaluator::loss(const ModelParams& params, const PreferenceFilter& filter) const {
  params.check(config_);
  const std::vector<double> genes = params.to_genes();
  return loss(genes, filter);
}

Eigen::MatrixXd BatchEvaluator::probabilities(std::span<const double> genes,
                                              const PreferenceFilter& filter) const {
  Eigen::MatrixXd out(features_.rows(), config_.class_count());
  run(genes, filter,
      [&](Index n, const Eigen::VectorXd& probs) { out.row(n) = probs.transpose(); });
  return out;
}

Eigen::MatrixXd BatchEvaluator::probabilities(const ModelParams& params,
                                              const PreferenceFilter& filter) const {
  params.check(config_);
  const std::vector<double> genes = params.to_genes();
  return probabilities(genes, filter);
}

}  // namespace modn
