#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "modn/errors.hpp"
#include "modn/gradients.hpp"

using namespace modn;

namespace {

struct Problem {
  ModelConfig config;
  ModelParams params;
  PreferenceFilter filter;
  Eigen::MatrixXd x;
  Eigen::MatrixXd y;
};

Problem make_problem(Variant v, Index d, Index m, Index c, Index n, std::uint64_t seed) {
  Problem p;
  p.config.input_dim = d;
  p.config.dendrite_count = m;
  p.config.output_dim = c;
  p.config.variant = v;
  p.config.synaptic_scale = 5.0;
  p.config.telodendron_scale = 1.5;
  Rng rng(seed);
  p.params = ModelParams::random(p.config, rng);
  if (v == Variant::kModn) {
    p.filter = PreferenceFilter(m, c);
    for (Index j = 0; j < m; ++j) p.filter.set(j, static_cast<Index>(rng.index(static_cast<std::size_t>(c))), true);
  } else {
    p.filter = default_filter(p.config);
  }
  p.x.resize(n, d);
  p.y = Eigen::MatrixXd::Zero(n, c);
  for (Index k = 0; k < n; ++k) {
    for (Index i = 0; i < d; ++i) p.x(k, i) = rng.uniform();
    p.y(k, static_cast<Index>(rng.index(static_cast<std::size_t>(c)))) = 1.0;
  }
  return p;
}

BpConfig exact() {
  BpConfig bp;
  bp.zero_threshold = 1e-300;
  return bp;
}

double batch_loss(const Problem& p, const ModelParams& params) {
  std::vector<ForwardTrace> traces;
  for (Index k = 0; k < p.x.rows(); ++k) traces.push_back(forward(p.x.row(k).transpose(), params, p.filter, p.config));
  return cross_entropy_loss(traces, p.y);
}

void expect_close(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  ASSERT_EQ(a.rows(), b.rows());
  ASSERT_EQ(a.cols(), b.cols());
  for (Index k = 0; k < a.size(); ++k) {
    const double diff = std::abs(a.data()[k] - b.data()[k]);
    const double scale = std::max(std::abs(a.data()[k]), std::abs(b.data()[k]));
    EXPECT_TRUE(diff < 1e-8 || diff < 1e-4 * scale) << a.data()[k] << " vs " << b.data()[k];
  }
}

}  // namespace

class GradientCheck : public ::testing::TestWithParam<Variant> {};

TEST_P(GradientCheck, MatchesFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Problem p = make_problem(GetParam(), 3, 6, 3, 12, seed);
    const GradientSet g = batch_gradients(p.params, p.x, p.y, p.filter, p.config, exact());
    const GradientSet fd = finite_difference_oracle(p.params, p.filter, p.config, p.x, p.y);
    expect_close(g.d_synaptic_weights, fd.d_synaptic_weights);
    expect_close(g.d_synaptic_thresholds, fd.d_synaptic_thresholds);
    expect_close(g.d_telodendron_weights, fd.d_telodendron_weights);
    expect_close(g.d_telodendron_thresholds, fd.d_telodendron_thresholds);
  }
}

INSTANTIATE_TEST_SUITE_P(Variants, GradientCheck,
                         ::testing::Values(Variant::kModnf, Variant::kModnp, Variant::kModn),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(Gradients, OracleAgreesWithLossDefinition) {
  const Problem p = make_problem(Variant::kModnf, 2, 3, 2, 5, 9);
  const GradientSet fd = finite_difference_oracle(p.params, p.filter, p.config, p.x, p.y);
  ModelParams plus = p.params, minus = p.params;
  plus.telodendron_weights(1) += 1e-5;
  minus.telodendron_weights(1) -= 1e-5;
  EXPECT_NEAR(fd.d_telodendron_weights(1), (batch_loss(p, plus) - batch_loss(p, minus)) / 2e-5, 1e-7);
}

TEST(Gradients, SpecialisedEntryPoints) {
  const Problem p = make_problem(Variant::kModnp, 2, 4, 2, 1, 4);
  const ForwardTrace t = forward(p.x.row(0).transpose(), p.params, p.filter, p.config);
  const Eigen::VectorXd label = p.y.row(0).transpose();
  const auto general = synaptic_gradients(t, label, p.params, p.filter, p.config, exact());
  const auto modnp = synaptic_gradients_modnp(t, label, p.params, p.filter, p.config, exact());
  EXPECT_EQ(general.first, modnp.first);
  EXPECT_THROW(synaptic_gradients_modnp(t, label, p.params, PreferenceFilter::all_ones(4, 2), p.config, exact()),
               UsageError);

  const Problem f = make_problem(Variant::kModnf, 2, 4, 2, 1, 4);
  const ForwardTrace tf = forward(f.x.row(0).transpose(), f.params, f.filter, f.config);
  EXPECT_EQ(synaptic_gradients_modnf(tf, label, f.params, f.config, exact()).second,
            synaptic_gradients(tf, label, f.params, f.filter, f.config, exact()).second);
}

TEST(Gradients, MitigationReplacesOnlyDeadOutputs) {
  Eigen::MatrixXd y(2, 2);
  y << 1e-9, 0.4, 0.7, 1e-7;
  const Eigen::MatrixXd m = apply_dying_mitigation(y, 1e-6);
  EXPECT_EQ(m(0, 0), 1.0);
  EXPECT_EQ(m(1, 1), 1.0);
  EXPECT_EQ(m(0, 1), 0.4);
  EXPECT_EQ(m(1, 0), 0.7);
}

// Two synapses on dendrite 0 are pushed far below the threshold.
TEST(Gradients, DyingDendrite) {
  Problem p = make_problem(Variant::kModnf, 4, 3, 2, 1, 17);
  p.config.synaptic_scale = 10.0;
  p.x(0, 0) = 0.5;
  p.x(0, 1) = 0.5;
  for (Index i = 0; i < 2; ++i) {
    p.params.synaptic_weights(i, 0) = -1.0;
    p.params.synaptic_thresholds(i, 0) = 2.0;
  }
  const ForwardTrace t = forward(p.x.row(0).transpose(), p.params, p.filter, p.config);
  ASSERT_LT(t.synaptic_outputs(0, 0), 1e-6);
  ASSERT_LT(t.synaptic_outputs(1, 0), 1e-6);
  const Eigen::VectorXd label = p.y.row(0).transpose();

  BpConfig off;
  off.dying_mitigation = false;
  const auto [w_off, t_off] = synaptic_gradients(t, label, p.params, p.filter, p.config, off);
  EXPECT_TRUE((w_off.col(0).array() == 0.0).all());
  EXPECT_TRUE((t_off.col(0).array() == 0.0).all());

  const auto [w_on, t_on] = synaptic_gradients(t, label, p.params, p.filter, p.config, BpConfig{});
  EXPECT_GT(w_on.col(0).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_GT(t_on.col(0).cwiseAbs().maxCoeff(), 0.0);
  // Other dendrites are untouched by the switch.
  EXPECT_EQ(w_on.col(1), w_off.col(1));
}

TEST(BpStep, SmallStepLowersLoss) {
  const Problem p = make_problem(Variant::kModnf, 3, 4, 2, 20, 8);
  BpConfig bp;
  bp.learning_rate = 0.05;
  const ModelParams next = bp_step(p.params, p.x, p.y, p.filter, p.config, bp);
  EXPECT_LT(batch_loss(p, next), batch_loss(p, p.params));
}

TEST(BpStep, RejectsDnm) {
  Problem p = make_problem(Variant::kModnf, 2, 2, 1, 3, 1);
  p.config.variant = Variant::kDnm;
  p.params = ModelParams::zeros(p.config);
  EXPECT_THROW(bp_step(p.params, p.x, Eigen::MatrixXd::Zero(3, 2), p.filter, p.config, BpConfig{}), UsageError);
}

TEST(BpConfig, Validation) {
  BpConfig bp;
  EXPECT_NO_THROW(bp.validate());
  bp.zero_threshold = 0.0;
  EXPECT_THROW(bp.validate(), UsageError);
  bp = BpConfig{};
  bp.learning_rate = -1.0;
  EXPECT_THROW(bp.validate(), UsageError);
}

TEST(GradientSet, Arithmetic) {
  ModelConfig c;
  c.input_dim = 2;
  c.dendrite_count = 2;
  c.output_dim = 2;
  GradientSet a = GradientSet::zeros(c);
  a.d_synaptic_weights.setOnes();
  GradientSet b = a;
  a += b;
  a *= 0.25;
  EXPECT_EQ(a.d_synaptic_weights(1, 1), 0.5);
  EXPECT_TRUE(a.all_finite());
  a.d_telodendron_weights(0) = INFINITY;
  EXPECT_FALSE(a.all_finite());
}
