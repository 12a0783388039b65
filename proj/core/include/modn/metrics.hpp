#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace modn {

using Index = Eigen::Index;

/// Row-wise argmax; ties go to the lowest class index.
std::vector<Index> predict_classes(const Eigen::Ref<const Eigen::MatrixXd>& outputs);

/// Fraction of rows whose argmax matches the label. outputs: N x C.
double accuracy(const Eigen::Ref<const Eigen::MatrixXd>& outputs, std::span<const Index> labels);
/// Same, with N x C one-hot targets.
double accuracy(const Eigen::Ref<const Eigen::MatrixXd>& outputs,
                const Eigen::Ref<const Eigen::MatrixXd>& one_hot);

/// One-vs-rest counts for a single class.
struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t tn = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + tn + fp + fn; }
  double tpr() const;
  double fpr() const;
};

/// Per-class counts of the argmax predictions.
std::vector<ConfusionCounts> confusion_counts(const Eigen::Ref<const Eigen::MatrixXd>& outputs,
                                              std::span<const Index> labels);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  /// Positive when score >= threshold. The first point uses +inf.
  double threshold = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;
  double auc() const;  // trapezoid
};

struct RocResult {
  RocCurve curve;
  double auc = 0.0;
};

/// Throws UsageError unless both classes are present.
RocResult roc_auc_binary(std::span<const double> scores, std::span<const std::uint8_t> positive);

/// Pools every (sample, class) pair with score O_c and positive iff c is the
/// label. outputs: N x C (C >= 2).
RocResult roc_auc_micro(const Eigen::Ref<const Eigen::MatrixXd>& outputs,
                        std::span<const Index> labels);

struct WsrtResult {
  double w_plus = 0.0;
  double w_minus = 0.0;
  std::size_t t_effective = 0;
  double mu_hat = 0.0;
  double delta_hat = 0.0;
  double p_value = 1.0;
  double p_adjusted = 1.0;
};

/// Differences are a2 - a1, so W+ counts pairs where a2 is larger.
/// p = Phi((min(W+, W-) - mu) / delta) without continuity correction,
/// p_adjusted = min(1, 2p).
WsrtResult wilcoxon_signed_rank(std::span<const double> a1, std::span<const double> a2);

}  // namespace modn
