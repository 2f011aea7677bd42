#include "mivi/finite_diff.hpp"
#include "mivi/variational.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace mivi;

TEST(QSample, TinyVarianceCollapsesToMean) {
  RngStream rng(1);
  Vec mean(3);
  mean << 0.5, -2.0, 7.0;
  const VariationalParams phi(mean, Vec::Constant(3, -60.0));
  EXPECT_LT((q_sample(phi, rng).z - mean).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(QSample, StandardNormalMoments) {
  RngStream rng(2);
  const VariationalParams phi = VariationalParams::standard(1);
  const int n = 1000000;
  double s = 0.0;
  double s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = q_sample(phi, rng).z[0];
    s += z;
    s2 += z * z;
  }
  const double m = s / n;
  EXPECT_NEAR(m, 0.0, 0.004);
  EXPECT_NEAR(s2 / n - m * m, 1.0, 0.01);
}

TEST(QSample, DeterministicAndReparameterized) {
  VariationalParams phi(Vec::Constant(2, 1.0), Vec::Constant(2, std::log(4.0)));
  RngStream a(9, 3);
  RngStream b(9, 3);
  const QSample x = q_sample(phi, a);
  const QSample y = q_sample(phi, b);
  EXPECT_EQ(x.z, y.z);
  EXPECT_LT((x.z - (phi.mean + 2.0 * x.eps)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(QLogPdf, StandardNormalAtZero) {
  EXPECT_NEAR(q_logpdf(VariationalParams::standard(1), Vec::Zero(1)).value, -0.9189385332046727, 1e-12);
}

TEST(QLogPdf, TranslationInvariant) {
  Vec mu(1);
  mu << 3.7;
  EXPECT_DOUBLE_EQ(q_logpdf(VariationalParams(mu, Vec::Zero(1)), mu).value,
                   q_logpdf(VariationalParams::standard(1), Vec::Zero(1)).value);
}

TEST(QLogPdf, GradientsMatchFiniteDifferences) {
  RngStream rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    const VariationalParams phi(rng.normal_vec(3), 0.5 * rng.normal_vec(3));
    const Vec z = rng.normal_vec(3);
    const QLogPdf lp = q_logpdf(phi, z);
    Vec analytic(6);
    analytic << lp.d_mean, lp.d_log_var;
    const Vec fd = finite_diff_grad([&](const Vec& f) { return q_logpdf_value(VariationalParams::from_flat(f), z); },
                                    phi.flat(), 1e-6);
    EXPECT_LT((analytic - fd).cwiseAbs().maxCoeff(), 1e-7);
    const Vec fdz = finite_diff_grad([&](const Vec& x) { return q_logpdf_value(phi, x); }, z, 1e-6);
    EXPECT_LT((lp.d_z - fdz).cwiseAbs().maxCoeff(), 1e-7);
  }
}

TEST(CrossEntropy, SamplesAtMeanGiveZeroMeanGradient) {
  Vec mean(2);
  mean << 1.0, -1.0;
  const VariationalParams phi(mean, Vec::Zero(2));
  const Vec g = cross_entropy_grad(phi, {mean, mean, mean});
  EXPECT_LT(g.head(2).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(CrossEntropy, SingleSampleMeanGradientIsMinusZ) {
  Vec z(1);
  z << 1.7;
  const Vec g = cross_entropy_grad(VariationalParams::standard(1), {z});
  EXPECT_NEAR(g[0], -1.7, 1e-15);
}

TEST(CrossEntropy, SymmetricSamplesGiveZeroMeanGradient) {
  Vec mean(2);
  mean << 0.3, 0.4;
  Vec d(2);
  d << 0.9, -1.3;
  const Vec g = cross_entropy_grad(VariationalParams(mean, Vec::Constant(2, 0.2)), {mean + d, mean - d});
  EXPECT_LT(g.head(2).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(CrossEntropy, GradientMatchesFiniteDifferences) {
  RngStream rng(5);
  const VariationalParams phi(rng.normal_vec(2), rng.normal_vec(2));
  std::vector<Vec> samples;
  for (int i = 0; i < 7; ++i) samples.push_back(rng.normal_vec(2));
  const Vec fd = finite_diff_grad(
      [&](const Vec& f) { return cross_entropy(VariationalParams::from_flat(f), samples); }, phi.flat(), 1e-6);
  EXPECT_LT(relative_error(cross_entropy_grad(phi, samples), fd), 1e-7);
}

TEST(VariationalParams, FlatRoundTripAndSize) {
  const VariationalParams phi(Vec::Constant(2, 1.0), Vec::Constant(2, -1.0));
  const VariationalParams back = VariationalParams::from_flat(phi.flat());
  EXPECT_EQ(back.mean, phi.mean);
  EXPECT_EQ(back.log_var, phi.log_var);
  EXPECT_THROW(VariationalParams(Vec::Zero(2), Vec::Zero(3)), std::invalid_argument);
  EXPECT_TRUE((VariationalParams(Vec::Zero(1), Vec::Constant(1, -1000.0)).variance().array() > 0).all());
}
