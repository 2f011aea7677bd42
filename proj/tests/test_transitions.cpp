#include "mivi/experiments.hpp"
#include "mivi/finite_diff.hpp"
#include "mivi/linalg.hpp"
#include "mivi/transitions.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace mivi;

namespace {

const std::string kDiabetes = std::string(MIVI_SOURCE_DIR) + "/data/diabetes.csv";

GaussianTarget standard_normal(Eigen::Index d) { return GaussianTarget(Vec::Zero(d), Mat::Identity(d, d)); }

}  // namespace

TEST(Sgld, ZeroStepIsIdentity) {
  const auto m = make_toy_target(ToyVariant::Banana);
  Vec z(2);
  z << 0.4, -1.0;
  EXPECT_EQ(sgld_step(*m, z, Vec::Zero(2), Vec::Zero(2)), z);
}

TEST(Sgld, StandardNormalByHand) {
  const GaussianTarget m = standard_normal(1);
  const Vec step = Vec::Constant(1, 0.1);
  EXPECT_DOUBLE_EQ(sgld_step(m, Vec::Zero(1), step, Vec::Zero(1))[0], 0.0);
  EXPECT_NEAR(sgld_step(m, Vec::Ones(1), step, Vec::Zero(1))[0], 0.95, 1e-15);
  // The kernel scales unit noise by √η before the step.
  StepNoise xi;
  xi.normal = Vec::Ones(1);
  SgldKernel k(m, std::log(0.1), false);
  EXPECT_NEAR(k.step(Vec::Ones(1), xi)[0], 0.95 + std::sqrt(0.1), 1e-15);
}

TEST(Sgld, OneStepLogStepDerivativeByHand) {
  const auto m = make_toy_target(ToyVariant::CorrelatedGaussian);
  const double log_step = -1.3;
  const SgldKernel k(*m, log_step, false);
  RngStream rng(1);
  const VariationalParams phi(rng.normal_vec(2), 0.3 * rng.normal_vec(2));
  const Vec eps0 = rng.normal_vec(2);
  const std::vector<StepNoise> noise{k.draw_noise(rng)};
  const SgldChainJacobian j = sgld_chain_jacobian(k, phi, eps0, noise);
  // dz₁/dη = ½∇log p(z₀) + ξ/(2√η), times η for the log parameterization.
  const Vec z0 = q_transform(phi, eps0);
  const double eta = std::exp(log_step);
  const Vec expected = eta * (0.5 * m->grad_z(z0) + noise[0].normal / (2.0 * std::sqrt(eta)));
  EXPECT_LT((j.d_eta.col(0) - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Sgld, PathwiseGradientMatchesFiniteDifferences) {
  RngStream rng(2);
  for (auto v : {ToyVariant::CorrelatedGaussian, ToyVariant::Banana, ToyVariant::GaussianMixture}) {
    const auto m = make_toy_target(v);
    for (int t : {1, 5, 10}) {
      for (bool per_dim : {false, true}) {
        SgldKernel k(*m, -2.0, per_dim);
        const Vec z0 = rng.normal_vec(2);
        const Chain chain = run_chain(k, z0, t, rng);
        const Vec w = rng.normal_vec(2);
        // Scalar test loss w·z_T with common random numbers.
        auto loss = [&](const Vec& eta) {
          SgldKernel kk(*m, 0.0, per_dim);
          kk.set_params(eta);
          return w.dot(replay_chain(kk, z0, chain.noise).z.back());
        };
        std::vector<Vec> z_bar(t + 1, Vec::Zero(2));
        z_bar.back() = w;
        Vec eta_bar = Vec::Zero(k.params().size());
        backprop_chain(k, chain, z_bar, &eta_bar);
        EXPECT_LE(relative_error(eta_bar, finite_diff_grad(loss, k.params())), 1e-4) << to_string(v) << " T=" << t;
      }
    }
  }
}

TEST(Sgld, VanishingStepGivesReparameterizationJacobian) {
  const auto m = make_toy_target(ToyVariant::Banana);
  const SgldKernel k(*m, -40.0, false);
  RngStream rng(3);
  const VariationalParams phi(rng.normal_vec(2), 0.5 * rng.normal_vec(2));
  const Vec eps0 = rng.normal_vec(2);
  std::vector<StepNoise> noise;
  for (int t = 0; t < 5; ++t) noise.push_back(k.draw_noise(rng));
  const SgldChainJacobian j = sgld_chain_jacobian(k, phi, eps0, noise);
  Mat expected = Mat::Zero(2, 4);
  expected.leftCols(2) = Mat::Identity(2, 2);
  expected.rightCols(2).diagonal() = 0.5 * phi.sd().cwiseProduct(eps0);
  EXPECT_LT((j.d_phi - expected).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Sgld, MinibatchNoiseRecordsDistinctIndices) {
  RngStream rng(4);
  const LogisticData d = generate_logistic_data(rng, 100);
  const LogisticModel m(d.x, d.y);
  const SgldKernel k(m, -5.0, false, 10);
  const StepNoise n = k.draw_noise(rng);
  ASSERT_EQ(n.batch.size(), 10u);
  std::set<std::size_t> unique(n.batch.begin(), n.batch.end());
  EXPECT_EQ(unique.size(), 10u);
  EXPECT_LT(*unique.rbegin(), 100u);
}

TEST(Logistic, ZeroOmegaGivesPriorCovariance) {
  RngStream rng(5);
  const LogisticData d = generate_logistic_data(rng, 30);
  const Vec kappa = d.y.array() - 0.5;
  const BetaConditional c = logistic_beta_conditional(d.x, kappa, Vec::Zero(30), Vec::Zero(4));
  EXPECT_LT((c.sigma - Mat::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((c.mean - d.x.transpose() * kappa).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Logistic, ScalarConditionalByHand) {
  const Mat x = Mat::Ones(1, 1);
  const Vec kappa = Vec::Constant(1, 0.5);
  const BetaConditional c = logistic_beta_conditional(x, kappa, Vec::Ones(1), Vec::Zero(1));
  EXPECT_NEAR(c.sigma(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(c.mean[0], 0.25, 1e-15);
}

TEST(Logistic, OmegaIsPositive) {
  RngStream rng(6);
  const LogisticData d = generate_logistic_data(rng, 50);
  const LogisticModel m(d.x, d.y);
  LogisticKernel k(m, {8, 8}, rng);
  EXPECT_TRUE((k.omega(rng.normal_vec(4), rng.normal_vec(50)).array() > 0.0).all());
}

TEST(Logistic, NetworkGradientMatchesFiniteDifferences) {
  RngStream rng(7);
  const LogisticData d = generate_logistic_data(rng, 20);
  const LogisticModel m(d.x, d.y);
  LogisticKernel k(m, {6, 6}, rng);
  for (int rep = 0; rep < 5; ++rep) {
    const Vec z = rng.normal_vec(4);
    const StepNoise n = k.draw_noise(rng);
    const Vec w = rng.normal_vec(4);
    const Vec eta0 = k.params();
    auto loss = [&](const Vec& eta) {
      k.set_params(eta);
      const double v = w.dot(k.step(z, n));
      k.set_params(eta0);
      return v;
    };
    Vec eta_bar = Vec::Zero(eta0.size());
    const Vec z_bar = k.backward(z, n, w, &eta_bar);
    EXPECT_LE(relative_error(eta_bar, finite_diff_grad(loss, eta0, 1e-6)), 1e-4);
    const Vec fdz = finite_diff_grad([&](const Vec& x) { return w.dot(k.step(x, n)); }, z, 1e-6);
    EXPECT_LE(relative_error(z_bar, fdz), 1e-4);
  }
}

TEST(Bridge, UnitScaleAndInverseEUniformGiveUnitLambda) {
  const RegressionData d = load_diabetes(kDiabetes);
  const BridgeModel m(d.x, d.y, 1.0, 0.3);
  Vec eta = Vec::Zero(20);
  for (int v = 0; v < 10; ++v) eta[2 * v + 1] = 0.1 * v;  // shapes do not matter at u = 1/e
  const BridgeKernel k(m, eta);
  StepNoise n;
  n.aux = Vec::Constant(11, std::exp(-1.0));
  n.normal = Vec::Zero(10);
  EXPECT_LT((k.lambda(n).array() - 1.0).abs().maxCoeff(), 1e-14);
  Mat a = d.x.transpose() * d.x;
  a.diagonal().array() += std::pow(0.3, 2.0);
  const Vec expected = a.ldlt().solve(d.x.transpose() * d.y);
  Vec z = Vec::Zero(11);
  EXPECT_LT((k.step(z, n).head(10) - expected).cwiseAbs().maxCoeff(), 1e-8 * expected.cwiseAbs().maxCoeff());
}

TEST(Bridge, VanishingPenaltyCentersOnOls) {
  const RegressionData d = load_diabetes(kDiabetes);
  const BridgeModel m(d.x, d.y, 1.0, 1e-9);
  const BridgeKernel k(m, Vec::Zero(20));
  RngStream rng(8);
  StepNoise n = k.draw_noise(rng);
  n.normal.setZero();
  const Vec beta = k.step(Vec::Zero(11), n).head(10);
  const Vec b_ols = ols(d.x, d.y);
  EXPECT_LT((beta - b_ols).cwiseAbs().maxCoeff(), 1e-6 * b_ols.cwiseAbs().maxCoeff());
}

TEST(Bridge, EtaGradientMatchesFiniteDifferencesOnSubsample) {
  const RegressionData full = load_diabetes(kDiabetes);
  const RegressionData d = standardize(full.names, full.x.topRows(50), full.y.head(50));
  RngStream rng(9);
  for (double alpha : {0.5, 1.0, 1.5}) {
    const BridgeModel m(d.x, d.y / 50.0, alpha, 0.5);
    BridgeKernel k(m, bridge_initial_params(m));
    for (int rep = 0; rep < 5; ++rep) {
      Vec z = rng.normal_vec(11);
      const StepNoise n = k.draw_noise(rng);
      const Vec w = rng.normal_vec(11);
      const Vec eta0 = k.params();
      auto loss = [&](const Vec& eta) {
        k.set_params(eta);
        const double v = w.dot(k.step(z, n));
        k.set_params(eta0);
        return v;
      };
      Vec eta_bar = Vec::Zero(20);
      const Vec z_bar = k.backward(z, n, w, &eta_bar);
      EXPECT_LE(relative_error(eta_bar, finite_diff_grad(loss, eta0, 1e-6)), 1e-4) << "alpha " << alpha;
      const Vec fdz = finite_diff_grad([&](const Vec& x) { return w.dot(k.step(x, n)); }, z, 1e-6);
      EXPECT_LE(relative_error(z_bar, fdz), 1e-4);
    }
  }
}

TEST(Extrapolate, RetainsRowsAfterBurnIn) {
  const auto m = make_toy_target(ToyVariant::CorrelatedGaussian);
  const SgldKernel k(*m, -2.0, false);
  RngStream rng(10);
  EXPECT_EQ(extrapolate(k, Vec::Zero(2), 5000, 4000, rng).rows.rows(), 1000);
  EXPECT_EQ(extrapolate(k, Vec::Zero(2), 11, 10, rng).rows.rows(), 1);
  EXPECT_THROW(extrapolate(k, Vec::Zero(2), 10, 10, rng), std::invalid_argument);
}

TEST(Extrapolate, Deterministic) {
  const auto m = make_toy_target(ToyVariant::Banana);
  const SgldKernel k(*m, -2.0, false);
  RngStream a(11, 4);
  RngStream b(11, 4);
  EXPECT_EQ(extrapolate(k, Vec::Zero(2), 300, 100, a).rows, extrapolate(k, Vec::Zero(2), 300, 100, b).rows);
}

TEST(Extrapolate, SgldChainTargetsCorrelatedGaussian) {
  const auto m = make_toy_target(ToyVariant::CorrelatedGaussian);
  const SgldKernel k(*m, -3.0, false);
  RngStream rng(12);
  const SampleTable t = extrapolate(k, Vec::Zero(2), 60000, 1000, rng);
  const Vec mean = t.rows.colwise().mean();
  const Mat c = t.rows.rowwise() - mean.transpose();
  const Mat cov = c.transpose() * c / static_cast<double>(t.rows.rows() - 1);
  EXPECT_NEAR(cov(0, 1) / std::sqrt(cov(0, 0) * cov(1, 1)), 0.8, 0.05);
}
