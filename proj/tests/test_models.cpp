#include "mivi/experiments.hpp"
#include "mivi/finite_diff.hpp"
#include "mivi/models.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace mivi;

namespace {

const std::string kDiabetes = std::string(MIVI_SOURCE_DIR) + "/data/diabetes.csv";

double log_gamma_pdf(double x, double shape, double rate) {
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1) * std::log(x) - rate * x;
}

double log_beta_pdf(double x, double a, double b) {
  return std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + (a - 1) * std::log(x) + (b - 1) * std::log1p(-x);
}

// Direct NB log joint in z = (log r, logit p), including the transform Jacobian.
double nb_oracle(const std::vector<int>& xs, const NBModel::Prior& pr, const Vec& z) {
  const double r = std::exp(z[0]);
  const double p = 1.0 / (1.0 + std::exp(-z[1]));
  double v = log_gamma_pdf(r, pr.r_shape, pr.r_rate) + z[0] + log_beta_pdf(p, pr.p_a, pr.p_b) + std::log(p) +
             std::log1p(-p);
  for (int x : xs) v += std::lgamma(x + r) - std::lgamma(r) - std::lgamma(x + 1.0) + x * std::log(p) + r * std::log1p(-p);
  return v;
}

struct NamedModel {
  std::string name;
  std::shared_ptr<TargetModel> model;
  double scale;  // spread of random test points
};

std::vector<NamedModel> all_models() {
  RngStream rng(77);
  std::vector<NamedModel> out;
  for (auto v : {ToyVariant::CorrelatedGaussian, ToyVariant::Banana, ToyVariant::GaussianMixture}) {
    out.push_back({to_string(v), std::shared_ptr<TargetModel>(make_toy_target(v)), 1.5});
  }
  Mat data(10, 2);
  for (int i = 0; i < 10; ++i) data.row(i) = rng.normal_vec(2).transpose();
  out.push_back({"conjugate", std::make_shared<ConjugateGaussianModel>(data, 1.5, 0.8), 1.0});
  out.push_back({"nb", std::make_shared<NBModel>(generate_nb_counts(rng, 200)), 0.5});
  const LogisticData ld = generate_logistic_data(rng, 100);
  out.push_back({"logistic", std::make_shared<LogisticModel>(ld.x, ld.y), 1.0});
  const RegressionData rd = load_diabetes(kDiabetes);
  out.push_back({"bridge", std::make_shared<BridgeModel>(rd.x.topRows(60), rd.y.head(60) / 50.0, 1.0, 0.5), 0.5});
  out.push_back({"bridge_a05", std::make_shared<BridgeModel>(rd.x.topRows(60), rd.y.head(60) / 50.0, 0.5, 0.5), 0.5});
  return out;
}

Vec random_point(const NamedModel& m, RngStream& rng) {
  Vec z = m.scale * rng.normal_vec(m.model->dim());
  if (m.name.rfind("bridge", 0) == 0) {
    // Keep β away from the kinks at zero.
    for (Eigen::Index i = 0; i + 1 < z.size(); ++i) z[i] += z[i] >= 0 ? 0.05 : -0.05;
  }
  if (m.name == "nb") z += Vec::Constant(2, 0.8);
  return z;
}

}  // namespace

TEST(Models, CorrelatedGaussianAtOrigin) {
  const auto m = make_toy_target(ToyVariant::CorrelatedGaussian);
  EXPECT_NEAR(m->log_joint(Vec::Zero(2)), -std::log(2 * M_PI * 0.6), 1e-12);
  EXPECT_NEAR(-std::log(2 * M_PI * 0.6), -1.32705, 1e-4);
}

TEST(Models, QuadraticHvpIsExact) {
  Mat cov(2, 2);
  cov << 1.0, 0.8, 0.8, 1.0;
  const GaussianTarget g(Vec::Zero(2), cov);
  Vec v(2);
  v << 0.3, -1.1;
  Vec z(2);
  z << 2.0, 5.0;
  EXPECT_LT((g.hvp(z, v) + cov.inverse() * v).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Models, NbEmptyDataIsPriorWithJacobian) {
  const NBModel m(std::vector<int>{});
  Vec a(2), b(2);
  a << 0.3, -0.5;
  b << -1.2, 2.0;
  EXPECT_NEAR(m.log_joint(a) - m.log_joint(b), nb_oracle({}, m.prior(), a) - nb_oracle({}, m.prior(), b), 1e-10);
}

TEST(Models, NbMatchesDirectLgammaSum) {
  RngStream rng(3);
  const auto xs = generate_nb_counts(rng, 300);
  const NBModel m(xs);
  for (int rep = 0; rep < 10; ++rep) {
    const Vec a = rng.normal_vec(2);
    const Vec b = rng.normal_vec(2);
    EXPECT_NEAR(m.log_joint(a) - m.log_joint(b), nb_oracle(xs, m.prior(), a) - nb_oracle(xs, m.prior(), b),
                1e-8 * std::abs(nb_oracle(xs, m.prior(), a)));
  }
}

TEST(Models, LogisticAtZeroBeta) {
  RngStream rng(4);
  const LogisticData d = generate_logistic_data(rng, 50);
  const LogisticModel m(d.x, d.y);
  EXPECT_NEAR(m.log_joint(Vec::Zero(4)), 50 * std::log(0.5) - 2.0 * std::log(2 * M_PI), 1e-10);
}

TEST(Models, GradientsMatchFiniteDifferences) {
  RngStream rng(5);
  for (const auto& m : all_models()) {
    for (int rep = 0; rep < 50; ++rep) {
      const Vec z = random_point(m, rng);
      const Vec fd = finite_diff_grad([&](const Vec& x) { return m.model->log_joint(x); }, z, 1e-6);
      EXPECT_LE(relative_error(m.model->grad_z(z), fd), 1e-5) << m.name;
    }
  }
}

TEST(Models, HvpMatchesFiniteDifferencesOfGradient) {
  RngStream rng(6);
  for (const auto& m : all_models()) {
    for (int rep = 0; rep < 10; ++rep) {
      const Vec z = random_point(m, rng);
      const Mat fd = finite_diff_jacobian([&](const Vec& x) { return m.model->grad_z(x); }, z, 1e-5);
      for (Eigen::Index i = 0; i < z.size(); ++i) {
        const Vec e = Vec::Unit(z.size(), i);
        EXPECT_LE(relative_error(m.model->hvp(z, e), fd.col(i)), 1e-4) << m.name << " column " << i;
      }
    }
  }
}

TEST(Models, MinibatchesAreUnbiased) {
  RngStream rng(7);
  const LogisticData d = generate_logistic_data(rng, 40);
  const LogisticModel m(d.x, d.y);
  const Vec z = rng.normal_vec(4);
  double mean = 0.0;
  Vec grad = Vec::Zero(4);
  for (std::size_t i = 0; i < 40; ++i) {
    mean += m.log_joint(z, {i}) / 40.0;
    grad += m.grad_z(z, {i}) / 40.0;
  }
  EXPECT_NEAR(mean, m.log_joint(z), 1e-9);
  EXPECT_LT((grad - m.grad_z(z)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Models, ConjugateThetaGradientAndEvidence) {
  RngStream rng(8);
  Mat data(6, 2);
  for (int i = 0; i < 6; ++i) data.row(i) = rng.normal_vec(2).transpose();
  ConjugateGaussianModel m(data, 2.0, 0.6);
  const Vec z = rng.normal_vec(2);
  const Vec fd = finite_diff_grad(
      [&](const Vec& t) {
        ConjugateGaussianModel c(data, 2.0, std::exp(t[0]));
        return c.log_joint(z);
      },
      m.theta(), 1e-6);
  EXPECT_LE(relative_error(m.grad_theta(z), fd), 1e-6);

  // Evidence oracle: each column of the data is N(0, s² I + τ² 11ᵀ).
  Mat cov = 0.36 * Mat::Identity(6, 6) + 2.0 * Mat::Ones(6, 6);
  const Eigen::LLT<Mat> llt(cov);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  double oracle = 0.0;
  for (int j = 0; j < 2; ++j) {
    const Vec x = data.col(j);
    oracle += -0.5 * 6 * std::log(2 * M_PI) - 0.5 * logdet - 0.5 * x.dot(llt.solve(x));
  }
  EXPECT_NEAR(m.log_evidence(), oracle, 1e-10);
  // log p(x) = log p(x, z) - log p(z | x) at any z.
  const Vec pm = m.posterior_mean();
  const double pv = m.posterior_var();
  const double post = -0.5 * 2 * std::log(2 * M_PI * pv) - 0.5 * (z - pm).squaredNorm() / pv;
  EXPECT_NEAR(m.log_joint(z) - post, oracle, 1e-10);
}

TEST(NbGrid, RecoversGeneratingValues) {
  RngStream rng(1, 0);
  const NBModel m(generate_nb_counts(rng));
  const NbGridPosterior g = nb_grid_posterior_auto(m);
  EXPECT_GE(g.mean_r, 1.7);
  EXPECT_LE(g.mean_r, 2.3);
  EXPECT_GE(g.mean_p, 0.65);
  EXPECT_LE(g.mean_p, 0.75);
  EXPECT_LT(g.corr_rp(), 0.0);
  EXPECT_NEAR(g.density.sum() * g.cell_area, 1.0, 1e-9);
}

TEST(NbGrid, NoDataGivesNormalizedPrior) {
  const NBModel m(std::vector<int>{}, NBModel::Prior{2.0, 1.0, 2.0, 2.0});
  NbGridSpec spec;
  const NbGridPosterior g = nb_grid_posterior(m, spec);
  // Gamma(2, 1) truncated to [0, 10] and Beta(2, 2).
  const double e10 = std::exp(-10.0);
  EXPECT_NEAR(g.mean_r, (2.0 - 122.0 * e10) / (1.0 - 11.0 * e10), 1e-4);
  EXPECT_NEAR(g.mean_p, 0.5, 1e-9);
  const double mass = 1.0 - 11.0 * e10;
  const double expected = std::exp(log_gamma_pdf(g.r[37], 2.0, 1.0) + log_beta_pdf(g.p[120], 2.0, 2.0)) / mass;
  EXPECT_NEAR(g.density(37, 120), expected, 1e-4 * expected);
}

TEST(Diabetes, LoadsAndStandardizes) {
  const RegressionData d = load_diabetes(kDiabetes);
  EXPECT_EQ(d.x.rows(), 442);
  EXPECT_EQ(d.x.cols(), 10);
  EXPECT_LE(d.x.colwise().mean().cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((d.x.colwise().norm().array() - 1.0).abs().maxCoeff(), 1e-12);
  EXPECT_LE(std::abs(d.y.mean()), 1e-10);
  const Vec oracle = (d.x.transpose() * d.x).ldlt().solve(d.x.transpose() * d.y);
  EXPECT_LE((ols(d.x, d.y) - oracle).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Models, ToyVariantNames) {
  for (auto v : {ToyVariant::CorrelatedGaussian, ToyVariant::Banana, ToyVariant::GaussianMixture}) {
    EXPECT_EQ(parse_toy_variant(to_string(v)), v);
  }
  EXPECT_THROW(parse_toy_variant("donut"), std::invalid_argument);
}
