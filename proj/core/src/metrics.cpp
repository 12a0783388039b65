#include "modn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>

#include "modn/errors.hpp"

namespace modn {
namespace {

void check_outputs(const Eigen::Ref<const Eigen::MatrixXd>& outputs, std::size_t label_count) {
  if (outputs.rows() == 0) throw UsageError("metric over an empty sample set");
  if (static_cast<std::size_t>(outputs.rows()) != label_count)
    throw ShapeError("one label per output row is required");
}

// Sweeps thresholds from +inf down through the distinct scores.
RocResult sweep(std::vector<std::pair<double, bool>> pairs) {
  std::size_t pos = 0;
  for (const auto& p : pairs) pos += p.second ? 1 : 0;
  const std::size_t neg = pairs.size() - pos;
  if (pos == 0 || neg == 0) throw UsageError("ROC needs both positive and negative samples");

  std::sort(pairs.begin(), pairs.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  RocResult result;
  auto& pts = result.curve.points;
  pts.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < pairs.size();) {
    const double s = pairs[i].first;
    for (; i < pairs.size() && pairs[i].first == s; ++i) (pairs[i].second ? tp : fp) += 1;
    pts.push_back({static_cast<double>(fp) / static_cast<double>(neg),
                   static_cast<double>(tp) / static_cast<double>(pos), s});
  }
  // Closing sentinel; it repeats (1, 1) when the lowest score already got there.
  pts.push_back({1.0, 1.0, -std::numeric_limits<double>::infinity()});
  result.auc = result.curve.auc();
  return result;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

std::vector<Index> predict_classes(const Eigen::Ref<const Eigen::MatrixXd>& outputs) {
  std::vector<Index> out(static_cast<std::size_t>(outputs.rows()));
  for (Index r = 0; r < outputs.rows(); ++r) {
    Index best = 0;
    for (Index c = 1; c < outputs.cols(); ++c)
      if (outputs(r, c) > outputs(r, best)) best = c;
    out[static_cast<std::size_t>(r)] = best;
  }
  return out;
}

double accuracy(const Eigen::Ref<const Eigen::MatrixXd>& outputs, std::span<const Index> labels) {
  check_outputs(outputs, labels.size());
  const auto pred = predict_classes(outputs);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double accuracy(const Eigen::Ref<const Eigen::MatrixXd>& outputs,
                const Eigen::Ref<const Eigen::MatrixXd>& one_hot) {
  if (one_hot.cols() != outputs.cols()) throw ShapeError("one-hot width must equal C");
  check_outputs(outputs, static_cast<std::size_t>(one_hot.rows()));
  std::vector<Index> labels(static_cast<std::size_t>(one_hot.rows()));
  for (Index r = 0; r < one_hot.rows(); ++r) {
    Index hot = -1;
    for (Index c = 0; c < one_hot.cols(); ++c)
      if (one_hot(r, c) == 1.0) {
        if (hot >= 0) throw UsageError("label row has more than one hot entry");
        hot = c;
      }
    if (hot < 0) throw UsageError("label row has no hot entry");
    labels[static_cast<std::size_t>(r)] = hot;
  }
  return accuracy(outputs, labels);
}

double ConfusionCounts::tpr() const {
  return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
}

double ConfusionCounts::fpr() const {
  return fp + tn == 0 ? 0.0 : static_cast<double>(fp) / static_cast<double>(fp + tn);
}

std::vector<ConfusionCounts> confusion_counts(const Eigen::Ref<const Eigen::MatrixXd>& outputs,
                                              std::span<const Index> labels) {
  check_outputs(outputs, labels.size());
  const auto pred = predict_classes(outputs);
  std::vector<ConfusionCounts> counts(static_cast<std::size_t>(outputs.cols()));
  for (std::size_t i = 0; i < pred.size(); ++i)
    for (Index c = 0; c < outputs.cols(); ++c) {
      auto& k = counts[static_cast<std::size_t>(c)];
      const bool actual = labels[i] == c, predicted = pred[i] == c;
      if (actual && predicted) ++k.tp;
      else if (actual) ++k.fn;
      else if (predicted) ++k.fp;
      else ++k.tn;
    }
  return counts;
}

double RocCurve::auc() const {
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i)
    area += (points[i].fpr - points[i - 1].fpr) * (points[i].tpr + points[i - 1].tpr) * 0.5;
  return area;
}

RocResult roc_auc_binary(std::span<const double> scores, std::span<const std::uint8_t> positive) {
  if (scores.size() != positive.size()) throw ShapeError("one label per score is required");
  std::vector<std::pair<double, bool>> pairs;
  pairs.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) pairs.emplace_back(scores[i], positive[i] != 0);
  return sweep(std::move(pairs));
}

RocResult roc_auc_micro(const Eigen::Ref<const Eigen::MatrixXd>& outputs,
                        std::span<const Index> labels) {
  check_outputs(outputs, labels.size());
  if (outputs.cols() < 2) throw UsageError("micro-averaged ROC needs at least two classes");
  std::vector<std::pair<double, bool>> pairs;
  pairs.reserve(static_cast<std::size_t>(outputs.size()));
  for (Index r = 0; r < outputs.rows(); ++r)
    for (Index c = 0; c < outputs.cols(); ++c)
      pairs.emplace_back(outputs(r, c), labels[static_cast<std::size_t>(r)] == c);
  return sweep(std::move(pairs));
}

WsrtResult wilcoxon_signed_rank(std::span<const double> a1, std::span<const double> a2) {
  if (a1.size() != a2.size()) throw ShapeError("paired samples must have equal length");
  if (a1.empty()) throw UsageError("signed-rank test needs at least one pair");

  std::vector<double> diffs;
  for (std::size_t i = 0; i < a1.size(); ++i)
    if (const double d = a2[i] - a1[i]; d != 0.0) diffs.push_back(d);

  WsrtResult r;
  const std::size_t t = diffs.size();
  r.t_effective = t;
  if (t == 0) return r;

  std::vector<std::size_t> order(t);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return std::abs(diffs[a]) < std::abs(diffs[b]); });
  // Near-equal magnitudes (floating noise from subtracting metrics) share a rank.
  constexpr double kTieTolerance = 1e-12;
  for (std::size_t i = 0; i < t;) {
    std::size_t j = i + 1;
    while (j < t && std::abs(diffs[order[j]]) - std::abs(diffs[order[i]]) <= kTieTolerance) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) (diffs[order[k]] > 0.0 ? r.w_plus : r.w_minus) += rank;
    i = j;
  }

  const double td = static_cast<double>(t);
  r.mu_hat = td * (td + 1.0) / 4.0;
  r.delta_hat = std::sqrt(td * (td + 1.0) * (2.0 * td + 1.0) / 24.0);
  r.p_value = std::clamp(normal_cdf((std::min(r.w_plus, r.w_minus) - r.mu_hat) / r.delta_hat), 0.0, 1.0);
  r.p_adjusted = std::min(1.0, 2.0 * r.p_value);
  return r;
}

}  // namespace modn
