#pragma once

// Analytic backpropagation for fixed-filter models (MODNP, MODNF, or MODN
// with a frozen filter) and a central-difference oracle.
//
// All gradients here are of the cross-entropy loss L (positive, minimised).
// The classic update rules are written as ascent on the per-sample
// log-likelihood sum_c O^_c log O_c, which is the same step. Two printed
// factors do not survive a finite-difference check and are replaced by the
// exact derivative: the synaptic-weight term carries Y(1 - Y) (not
// Y(Y - 1)), and the threshold term carries the opposite sign. The
// telodendron and MODNP expressions are also completed with the softmax
// coupling from non-target classes, which the single-class forms omit.

#include <Eigen/Core>

#include <utility>

#include "modn/model.hpp"

namespace modn {

struct GradientSet {
  Eigen::MatrixXd d_synaptic_weights;     // D x M
  Eigen::MatrixXd d_synaptic_thresholds;  // D x M
  Eigen::VectorXd d_telodendron_weights;  // C
  Eigen::VectorXd d_telodendron_thresholds;

  static GradientSet zeros(const ModelConfig& config);
  bool all_finite() const;
  GradientSet& operator+=(const GradientSet& other);
  GradientSet& operator*=(double s);
};

struct BpConfig {
  double learning_rate = 0.01;
  int max_iterations = 3000;
  /// Synaptic outputs below this are treated as zero.
  double zero_threshold = 1e-6;
  /// When on, zero synaptic outputs are replaced by 1 inside the
  /// leave-one-out products so that a dendrite keeps receiving gradient.
  bool dying_mitigation = true;

  void validate() const;
};

/// Per-sample partials of the loss w.r.t. telodendron weights and
/// thresholds, in that order.
std::pair<Eigen::VectorXd, Eigen::VectorXd> telodendron_gradients(
    const ForwardTrace& trace, const Eigen::Ref<const Eigen::VectorXd>& label,
    const ModelParams& params, const ModelConfig& config);

/// Synaptic partials for any fixed filter (weights, thresholds).
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> synaptic_gradients(
    const ForwardTrace& trace, const Eigen::Ref<const Eigen::VectorXd>& label,
    const ModelParams& params, const PreferenceFilter& filter, const ModelConfig& config,
    const BpConfig& bp);

/// As synaptic_gradients(); throws UsageError unless `filter` is the equal
/// partition.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> synaptic_gradients_modnp(
    const ForwardTrace& trace, const Eigen::Ref<const Eigen::VectorXd>& label,
    const ModelParams& params, const PreferenceFilter& filter, const ModelConfig& config,
    const BpConfig& bp);

/// All-ones filter implied.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> synaptic_gradients_modnf(
    const ForwardTrace& trace, const Eigen::Ref<const Eigen::VectorXd>& label,
    const ModelParams& params, const ModelConfig& config, const BpConfig& bp);

/// Copy of Y with every entry below `zero_threshold` replaced by 1.
Eigen::MatrixXd apply_dying_mitigation(const Eigen::Ref<const Eigen::MatrixXd>& y,
                                       double zero_threshold);

/// Full per-sample gradient.
GradientSet sample_gradients(const ForwardTrace& trace,
                             const Eigen::Ref<const Eigen::VectorXd>& label,
                             const ModelParams& params, const PreferenceFilter& filter,
                             const ModelConfig& config, const BpConfig& bp);

/// Batch-mean gradient of L. features: N x D, targets: N x C one-hot.
GradientSet batch_gradients(const ModelParams& params,
                            const Eigen::Ref<const Eigen::MatrixXd>& features,
                            const Eigen::Ref<const Eigen::MatrixXd>& targets,
                            const PreferenceFilter& filter, const ModelConfig& config,
                            const BpConfig& bp);

/// One full-batch descent step: p <- p - eta * dL/dp.
/// Requires MODNP, MODNF or MODN (the caller's filter is taken as frozen).
ModelParams bp_step(const ModelParams& params, const Eigen::Ref<const Eigen::MatrixXd>& features,
                    const Eigen::Ref<const Eigen::MatrixXd>& targets,
                    const PreferenceFilter& filter, const ModelConfig& config,
                    const BpConfig& bp);

/// Central differences of the batch-mean loss, two forward passes per entry.
GradientSet finite_difference_oracle(const ModelParams& params, const PreferenceFilter& filter,
                                     const ModelConfig& config,
                                     const Eigen::Ref<const Eigen::MatrixXd>& features,
                                     const Eigen::Ref<const Eigen::MatrixXd>& targets,
                                     double step = 1e-6);

}  // namespace modn
