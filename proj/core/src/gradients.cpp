#include "modn/gradients.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "modn/errors.hpp"

namespace modn {
namespace {

void check_trace(const ForwardTrace& trace, const Eigen::Ref<const Eigen::VectorXd>& label,
                 const ModelConfig& config) {
  if (config.variant == Variant::kDnm)
    throw UsageError("analytic gradients cover the telodendron models only (not DNM)");
  if (trace.synaptic_outputs.rows() != config.input_dim ||
      trace.synaptic_outputs.cols() != config.dendrite_count ||
      trace.input.size() != config.input_dim ||
      trace.telodendron_outputs.size() != config.output_dim ||
      trace.class_probs.size() != config.output_dim)
    throw ShapeError("forward trace does not match the model configuration");
  if (label.size() != config.output_dim) throw ShapeError("label length must equal C");
}

// dL/dR_s = O_s * sum(label) - label_s  (softmax + cross-entropy).
Eigen::VectorXd loss_wrt_telodendra(const ForwardTrace& trace,
                                    const Eigen::Ref<const Eigen::VectorXd>& label) {
  return trace.class_probs * label.sum() - label;
}

}  // namespace

GradientSet GradientSet::zeros(const ModelConfig& config) {
  const Index d = config.input_dim, m = config.dendrite_count, t = config.telodendron_count();
  return GradientSet{Eigen::MatrixXd::Zero(d, m), Eigen::MatrixXd::Zero(d, m),
                     Eigen::VectorXd::Zero(t), Eigen::VectorXd::Zero(t)};
}

bool GradientSet::all_finite() const {
  return d_synaptic_weights.allFinite() && d_synaptic_thresholds.allFinite() &&
         d_telodendron_weights.allFinite() && d_telodendron_thresholds.allFinite();
}

GradientSet& GradientSet::operator+=(const GradientSet& other) {
  d_synaptic_weights += other.d_synaptic_weights;
  d_synaptic_thresholds += other.d_synaptic_thresholds;
  d_telodendron_weights += other.d_telodendron_weights;
  d_telodendron_thresholds += other.d_telodendron_thresholds;
  return *this;
}

GradientSet& GradientSet::operator*=(double s) {
  d_synaptic_weights *= s;
  d_synaptic_thresholds *= s;
  d_telodendron_weights *= s;
  d_telodendron_thresholds *= s;
  return *this;
}

void BpConfig::validate() const {
  if (!(learning_rate > 0.0)) throw UsageError("learning rate must be positive");
  if (max_iterations < 1) throw UsageError("BP needs at least one iteration");
  if (!(zero_threshold > 0.0)) throw UsageError("zero threshold must be positive");
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> telodendron_gradients(
    const ForwardTrace& trace, const Eigen::Ref<const Eigen::VectorXd>& label,
    const ModelParams& params, const ModelConfig& config) {
  check_trace(trace, label, config);
  params.check(config);
  const Eigen::ArrayXd g_r = loss_wrt_telodendra(trace, label).array();
  const Eigen::ArrayXd sech2 = 1.0 - trace.telodendron_outputs.array().square();
  const double at = config.telodendron_scale;
  Eigen::VectorXd d_w = (g_r * at * trace.soma_outputs.array() * sech2).matrix();
  Eigen::VectorXd d_t = (-g_r * at * sech2).matrix();
  return {std::move(d_w), std::move(d_t)};
}

Eigen::MatrixXd apply_dying_mitigation(const Eigen::Ref<const Eigen::MatrixXd>& y,
                                       double zero_threshold) {
  return (y.array() < zero_threshold).select(1.0, y);
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> synaptic_gradients(
    const ForwardTrace& trace, const Eigen::Ref<const Eigen::VectorXd>& label,
    const ModelParams& params, const PreferenceFilter& filter, const ModelConfig& config,
    const BpConfig& bp) {
  check_trace(trace, label, config);
  params.check(config);
  if (filter.dendrites() != config.dendrite_count || filter.outputs() != config.output_dim)
    throw ShapeError("preference filter must be M x C");

  const Index d = config.input_dim, m = config.dendrite_count;
  const Eigen::MatrixXd& y = trace.synaptic_outputs;

  // dL/dV_s, then dL/dZ_j = sum_s P_js dL/dV_s.
  const Eigen::ArrayXd sech2 = 1.0 - trace.telodendron_outputs.array().square();
  const Eigen::VectorXd g_v = (loss_wrt_telodendra(trace, label).array() * config.telodendron_scale *
                               params.telodendron_weights.array() * sech2)
                                  .matrix();
  const Eigen::VectorXd g_z = filter.matrix() * g_v;

  // Sub-threshold outputs are zero. With mitigation they become 1 inside the
  // leave-one-out products only; the local sigmoid slope keeps the true Y.
  const Eigen::ArrayXXd below = (y.array() < bp.zero_threshold).cast<double>();
  const Eigen::ArrayXXd product_terms =
      bp.dying_mitigation ? apply_dying_mitigation(y, bp.zero_threshold).array()
                          : ((1.0 - below) * y.array()).eval();
  const Eigen::ArrayXXd local_y =
      bp.dying_mitigation ? y.array() : ((1.0 - below) * y.array()).eval();
  const Eigen::ArrayXXd slope = config.synaptic_scale * local_y * (1.0 - local_y);

  Eigen::MatrixXd d_w(d, m), d_t(d, m);
  std::vector<double> prefix(static_cast<std::size_t>(d) + 1), suffix(static_cast<std::size_t>(d) + 1);
  for (Index j = 0; j < m; ++j) {
    // prod_{q != i} via prefix/suffix products, safe for exact zeros.
    prefix[0] = 1.0;
    for (Index i = 0; i < d; ++i) prefix[i + 1] = prefix[i] * product_terms(i, j);
    suffix[d] = 1.0;
    for (Index i = d; i-- > 0;) suffix[i] = suffix[i + 1] * product_terms(i, j);
    for (Index i = 0; i < d; ++i) {
      const double common = g_z(j) * prefix[i] * suffix[i + 1] * slope(i, j);
      // dY/dw = a_s x Y(1-Y), dY/dtheta = -a_s Y(1-Y).
      d_w(i, j) = common * trace.input(i);
      d_t(i, j) = -common;
    }
  }
  return {std::move(d_w), std::move(d_t)};
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> synaptic_gradients_modnp(
    const ForwardTrace& trace, const Eigen::Ref<const Eigen::VectorXd>& label,
    const ModelParams& params, const PreferenceFilter& filter, const ModelConfig& config,
    const BpConfig& bp) {
  if (!filter.is_partition())
    throw UsageError("MODNP gradients need the equal-partition preference filter");
  return synaptic_gradients(trace, label, params, filter, config, bp);
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> synaptic_gradients_modnf(
    const ForwardTrace& trace, const Eigen::Ref<const Eigen::VectorXd>& label,
    const ModelParams& params, const ModelConfig& config, const BpConfig& bp) {
  return synaptic_gradients(trace, label, params,
                            PreferenceFilter::all_ones(config.dendrite_count, config.output_dim),
                            config, bp);
}

GradientSet sample_gradients(const ForwardTrace& trace,
                             const Eigen::Ref<const Eigen::VectorXd>& label,
                             const ModelParams& params, const PreferenceFilter& filter,
                             const ModelConfig& config, const BpConfig& bp) {
  GradientSet g;
  std::tie(g.d_telodendron_weights, g.d_telodendron_thresholds) =
      telodendron_gradients(trace, label, params, config);
  std::tie(g.d_synaptic_weights, g.d_synaptic_thresholds) =
      synaptic_gradients(trace, label, params, filter, config, bp);
  return g;
}

GradientSet batch_gradients(const ModelParams& params,
                            const Eigen::Ref<const Eigen::MatrixXd>& features,
                            const Eigen::Ref<const Eigen::MatrixXd>& targets,
                            const PreferenceFilter& filter, const ModelConfig& config,
                            const BpConfig& bp) {
  if (features.rows() < 1) throw UsageError("gradient batch is empty");
  if (features.rows() != targets.rows()) throw ShapeError("one target row per sample is required");
  GradientSet total = GradientSet::zeros(config);
  for (Index n = 0; n < features.rows(); ++n) {
    const ForwardTrace trace = forward(features.row(n).transpose(), params, filter, config);
    total += sample_gradients(trace, targets.row(n).transpose(), params, filter, config, bp);
  }
  total *= 1.0 / static_cast<double>(features.rows());
  return total;
}

ModelParams bp_step(const ModelParams& params, const Eigen::Ref<const Eigen::MatrixXd>& features,
                    const Eigen::Ref<const Eigen::MatrixXd>& targets,
                    const PreferenceFilter& filter, const ModelConfig& config,
                    const BpConfig& bp) {
  config.validate();
  bp.validate();
  if (config.variant == Variant::kDnm)
    throw UsageError("BP is provided for the telodendron models only");
  if (config.variant == Variant::kModnp && !filter.is_partition())
    throw UsageError("MODNP training needs the equal-partition filter");
  if (config.variant == Variant::kModnf && !filter.is_all_ones())
    throw UsageError("MODNF training needs the all-ones filter");

  const GradientSet g = batch_gradients(params, features, targets, filter, config, bp);
  if (!g.all_finite()) throw std::runtime_error("non-finite gradient in bp_step");

  ModelParams next = params;
  next.synaptic_weights -= bp.learning_rate * g.d_synaptic_weights;
  next.synaptic_thresholds -= bp.learning_rate * g.d_synaptic_thresholds;
  next.telodendron_weights -= bp.learning_rate * g.d_telodendron_weights;
  next.telodendron_thresholds -= bp.learning_rate * g.d_telodendron_thresholds;
  return next;
}

GradientSet finite_difference_oracle(const ModelParams& params, const PreferenceFilter& filter,
                                     const ModelConfig& config,
                                     const Eigen::Ref<const Eigen::MatrixXd>& features,
                                     const Eigen::Ref<const Eigen::MatrixXd>& targets,
                                     double step) {
  if (!(step > 0.0)) throw UsageError("finite-difference step must be positive");
  auto batch_loss = [&](const ModelParams& p) {
    std::vector<ForwardTrace> traces;
    traces.reserve(static_cast<std::size_t>(features.rows()));
    for (Index n = 0; n < features.rows(); ++n)
      traces.push_back(forward(features.row(n).transpose(), p, filter, config));
    return cross_entropy_loss(traces, targets);
  };

  GradientSet g = GradientSet::zeros(config);
  ModelParams probe = params;
  auto sweep = [&](auto member, auto& out) {
    auto& target = probe.*member;
    for (Index k = 0; k < target.size(); ++k) {
      const double saved = target.data()[k];
      target.data()[k] = saved + step;
      const double up = batch_loss(probe);
      target.data()[k] = saved - step;
      const double down = batch_loss(probe);
      target.data()[k] = saved;
      out.data()[k] = (up - down) / (2.0 * step);
    }
  };
  sweep(&ModelParams::synaptic_weights, g.d_synaptic_weights);
  sweep(&ModelParams::synaptic_thresholds, g.d_synaptic_thresholds);
  sweep(&ModelParams::telodendron_weights, g.d_telodendron_weights);
  sweep(&ModelParams::telodendron_thresholds, g.d_telodendron_thresholds);
  return g;
}

}  // namespace modn
