#pragma once

// Forward model of the multi-output dendritic neuron (MODN), its fixed-filter
// instances (MODNP, MODNF) and the single-output DNM baseline.
//
// Pipeline per sample x in [0,1]^D:
//   synapses   Y_ij = sigmoid(a_s * (w_ij * x_i - t_ij))        D x M
//   dendrites  Z_j  = prod_i Y_ij                                M
//   soma       V    = Z * P          (P is the M x C preference filter)
//   telodendra R_c  = tanh(a_t * (w_c * V_c - t_c))              C
//   target     O    = softmax(R)
// DNM replaces soma/telodendra/target with V = sum_j Z_j and
// O = sigmoid(a_o * (V - t_o)).

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "modn/rng.hpp"

namespace modn {

using Index = Eigen::Index;

enum class Variant { kDnm, kModn, kModnp, kModnf };

std::string_view to_string(Variant v);
/// Accepts "dnm", "modn", "modnp", "modnf" (case-insensitive).
Variant parse_variant(std::string_view name);

struct ModelConfig {
  Index input_dim = 1;       // D
  Index dendrite_count = 1;  // M
  Index output_dim = 1;      // C; 1 for DNM
  double synaptic_scale = 10.0;
  double telodendron_scale = 1.0;
  Variant variant = Variant::kModnf;
  // DNM soma only.
  double dnm_soma_scale = 10.0;
  double dnm_soma_threshold = 0.5;

  /// Throws UsageError on any violated invariant.
  void validate() const;

  /// Number of class probabilities produced. DNM emits a single sigmoid that
  /// is read as P(class 1), so it classifies two classes.
  Index class_count() const;
  /// Learnable telodendra; zero for DNM.
  Index telodendron_count() const;
  /// Flattened length of ModelParams: 2*D*M + 2*telodendron_count().
  Index continuous_gene_count() const;
  /// M*C for the learnable-filter variant, otherwise 0.
  Index filter_bit_count() const;
};

struct ModelParams {
  Eigen::MatrixXd synaptic_weights;     // D x M
  Eigen::MatrixXd synaptic_thresholds;  // D x M
  Eigen::VectorXd telodendron_weights;  // C (empty for DNM)
  Eigen::VectorXd telodendron_thresholds;

  static ModelParams zeros(const ModelConfig& config);
  /// Every entry uniform in [lo, hi].
  static ModelParams random(const ModelConfig& config, Rng& rng, double lo = -1.0,
                            double hi = 1.0);
  /// Inverse of to_genes(). Layout: w_s (column-major), t_s, w_t, t_t.
  static ModelParams from_genes(const ModelConfig& config, std::span<const double> genes);
  std::vector<double> to_genes() const;

  /// Throws ShapeError on shape mismatch, UsageError on non-finite entries.
  void check(const ModelConfig& config) const;
};

enum class SynapseState { kExcitatory, kInhibitory, kUnvarying0, kUnvarying1, kIndeterminate };
enum class DendriteState { kInoperative, kExclusive, kCommunal };

std::string_view to_string(SynapseState s);
std::string_view to_string(DendriteState s);

/// Boolean M x C matrix routing dendrites to soma outputs.
class PreferenceFilter {
 public:
  PreferenceFilter() = default;
  /// All-zero filter.
  PreferenceFilter(Index dendrites, Index outputs);

  /// MODNF: every dendrite feeds every output.
  static PreferenceFilter all_ones(Index dendrites, Index outputs);
  /// MODNP: dendrite j (0-based) feeds only output ceil((j+1)*C/M) - 1.
  /// Requires M divisible by C.
  static PreferenceFilter partition(Index dendrites, Index outputs);
  /// Row-major bits, bit j*C + c is P(j, c). Any nonzero byte counts as 1.
  static PreferenceFilter from_bits(Index dendrites, Index outputs,
                                    std::span<const std::uint8_t> bits);

  Index dendrites() const { return matrix_.rows(); }
  Index outputs() const { return matrix_.cols(); }
  bool at(Index j, Index c) const { return matrix_(j, c) != 0.0; }
  void set(Index j, Index c, bool value) { matrix_(j, c) = value ? 1.0 : 0.0; }

  /// Throws std::out_of_range for j outside [0, M).
  DendriteState dendrite_state(Index j) const;
  bool is_all_ones() const;
  bool is_partition() const;
  bool has_inoperative_row() const;

  std::vector<std::uint8_t> bits() const;
  /// 0/1 entries as doubles, for the soma product.
  const Eigen::MatrixXd& matrix() const { return matrix_; }

  friend bool operator==(const PreferenceFilter& a, const PreferenceFilter& b) {
    return a.matrix_.rows() == b.matrix_.rows() && a.matrix_.cols() == b.matrix_.cols() &&
           a.matrix_ == b.matrix_;
  }

 private:
  Eigen::MatrixXd matrix_;
};

/// The fixed filter a variant implies: all-ones for MODNF (and the DNM
/// membrane, with C = 1), the equal partition for MODNP. Throws UsageError
/// for MODN, whose filter is learned.
PreferenceFilter default_filter(const ModelConfig& config);

struct ForwardTrace {
  Eigen::VectorXd input;                // x, D
  Eigen::MatrixXd synaptic_outputs;     // Y, D x M
  Eigen::VectorXd dendrite_outputs;     // Z, M
  Eigen::VectorXd soma_outputs;         // V, C (1 for DNM: the membrane sum)
  Eigen::VectorXd telodendron_outputs;  // R, C (empty for DNM)
  Eigen::VectorXd class_probs;          // O, class_count()
};

Eigen::MatrixXd synaptic_forward(const Eigen::Ref<const Eigen::VectorXd>& x,
                                 const ModelParams& params, const ModelConfig& config);
SynapseState classify_synapse_state(double weight, double threshold);
Eigen::VectorXd dendrite_forward(const Eigen::Ref<const Eigen::MatrixXd>& y);
Eigen::VectorXd soma_filter(const Eigen::Ref<const Eigen::VectorXd>& z,
                            const PreferenceFilter& filter);
DendriteState classify_dendrite_state(const PreferenceFilter& filter, Index j);
Eigen::VectorXd telodendron_forward(const Eigen::Ref<const Eigen::VectorXd>& v,
                                    const ModelParams& params, const ModelConfig& config);
/// Max-subtracted softmax.
Eigen::VectorXd target_cell_softmax(const Eigen::Ref<const Eigen::VectorXd>& r);
double dnm_soma_forward(double v, const ModelConfig& config);

ForwardTrace forward(const Eigen::Ref<const Eigen::VectorXd>& x, const ModelParams& params,
                     const PreferenceFilter& filter, const ModelConfig& config);

/// Probability floor inside the loss logarithm.
inline constexpr double kLogFloor = 1e-300;

/// Mean cross-entropy over samples. `targets` is N x class_count one-hot.
double cross_entropy_loss(std::span<const ForwardTrace> traces,
                          const Eigen::Ref<const Eigen::MatrixXd>& targets);

/// Batched evaluation over a fixed feature matrix, without materialising
/// per-sample traces. This is the fitness path used by the optimizers.
class BatchEvaluator {
 public:
  /// features: N x D in [0,1]; labels: class index per row.
  BatchEvaluator(ModelConfig config, Eigen::MatrixXd features, std::vector<Index> labels);

  const ModelConfig& config() const { return config_; }
  Index sample_count() const { return features_.rows(); }

  /// Mean cross-entropy. `genes` uses the ModelParams::to_genes() layout.
  double loss(std::span<const double> genes, const PreferenceFilter& filter) const;
  double loss(const ModelParams& params, const PreferenceFilter& filter) const;

  /// N x class_count probabilities.
  Eigen::MatrixXd probabilities(std::span<const double> genes,
                                const PreferenceFilter& filter) const;
  Eigen::MatrixXd probabilities(const ModelParams& params, const PreferenceFilter& filter) const;

 private:
  template <typename Sink>
  void run(std::span<const double> genes, const PreferenceFilter& filter, Sink&& sink) const;

  ModelConfig config_;
  Eigen::MatrixXd features_;  // N x D, one row per sample
  std::vector<Index> labels_;
};

}  // namespace modn
