#include "mivi/finite_diff.hpp"
#include "mivi/io.hpp"
#include "mivi/linalg.hpp"
#include "mivi/models.hpp"
#include "mivi/random.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace mivi;

namespace {

Mat random_spd(RngStream& rng, Eigen::Index n) {
  Mat m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) m.col(i) = rng.normal_vec(n);
  return m.transpose() * m + Mat::Identity(n, n);
}

// Reference Cholesky written directly from the defining recurrence.
Mat reference_cholesky(const Mat& a) {
  const Eigen::Index n = a.rows();
  Mat l = Mat::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double s = a(j, j);
    for (Eigen::Index k = 0; k < j; ++k) s -= l(j, k) * l(j, k);
    l(j, j) = std::sqrt(s);
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double t = a(i, j);
      for (Eigen::Index k = 0; k < j; ++k) t -= l(i, k) * l(j, k);
      l(i, j) = t / l(j, j);
    }
  }
  return l;
}

struct Moments {
  double mean;
  double var;
};

Moments moments(const Vec& v) {
  const double m = v.mean();
  return {m, (v.array() - m).square().sum() / static_cast<double>(v.size() - 1)};
}

}  // namespace

TEST(Cholesky, IdentityIsFixed) {
  EXPECT_TRUE(cholesky(Mat::Identity(3, 3)).isApprox(Mat::Identity(3, 3)));
}

TEST(Cholesky, TwoByTwoByHand) {
  Mat a(2, 2);
  a << 4, 2, 2, 3;
  Mat expected(2, 2);
  expected << 2, 0, 1, std::sqrt(2.0);
  EXPECT_LT((cholesky(a) - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Cholesky, HilbertReconstructs) {
  Mat h(8, 8);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) h(i, j) = 1.0 / (i + j + 1);
  const Mat l = cholesky(h);
  EXPECT_LE((l * l.transpose() - h).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Cholesky, RandomSpdMatchesRecurrenceAndReconstructs) {
  RngStream rng(3);
  for (Eigen::Index n : {1, 5, 20, 50}) {
    const Mat a = random_spd(rng, n);
    const Mat l = cholesky(a);
    EXPECT_LE((l * l.transpose() - a).cwiseAbs().maxCoeff(), 1e-9 * a.norm());
    EXPECT_LT((l - reference_cholesky(a)).cwiseAbs().maxCoeff(), 1e-9 * a.norm());
  }
}

TEST(Cholesky, RejectsIndefinite) {
  Mat a(2, 2);
  a << 1, 2, 2, 1;
  EXPECT_THROW(cholesky(a), NotPositiveDefinite);
}

TEST(CholeskyAdjoint, ZeroCotangentGivesZero) {
  EXPECT_EQ(cholesky_adjoint(Mat::Identity(3, 3), Mat::Zero(3, 3)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(CholeskyAdjoint, DiagonalInputGivesDiagonalAdjoint) {
  Mat a = Mat::Zero(3, 3);
  a.diagonal() << 1.0, 4.0, 9.0;
  Mat l_bar = Mat::Zero(3, 3);
  l_bar.diagonal() << 0.3, -1.0, 2.0;
  const Mat a_bar = cholesky_adjoint(cholesky(a), l_bar);
  Mat off = a_bar;
  off.diagonal().setZero();
  EXPECT_LT(off.cwiseAbs().maxCoeff(), 1e-15);
  // dL_ii/dA_ii = 1/(2 L_ii).
  EXPECT_NEAR(a_bar(0, 0), 0.3 / 2.0, 1e-15);
  EXPECT_NEAR(a_bar(1, 1), -1.0 / 4.0, 1e-15);
  EXPECT_NEAR(a_bar(2, 2), 2.0 / 6.0, 1e-15);
}

TEST(CholeskyAdjoint, MatchesFiniteDifferencesOnRandomSpd) {
  RngStream rng(11);
  for (int rep = 0; rep < 100; ++rep) {
    const Eigen::Index n = 4;
    const Mat a = random_spd(rng, n);
    Mat l_bar(n, n);
    for (Eigen::Index i = 0; i < n; ++i) l_bar.col(i) = rng.normal_vec(n);
    l_bar = l_bar.triangularView<Eigen::Lower>();
    const Mat a_bar = cholesky_adjoint(cholesky(a), l_bar);
    // Symmetric direction: df = Σ Ā ⊙ dA.
    Mat dm(n, n);
    for (Eigen::Index i = 0; i < n; ++i) dm.col(i) = rng.normal_vec(n);
    const Mat da = dm + dm.transpose();
    const double h = 1e-6;
    const double fd = ((reference_cholesky(a + h * da) - reference_cholesky(a - h * da)).cwiseProduct(l_bar)).sum() / (2 * h);
    const double analytic = a_bar.cwiseProduct(da).sum();
    EXPECT_LE(std::abs(fd - analytic) / std::max(1.0, std::abs(fd)), 1e-5);
  }
}

TEST(CholeskyTangent, MatchesFiniteDifferences) {
  RngStream rng(12);
  const Mat a = random_spd(rng, 5);
  Mat dm(5, 5);
  for (int i = 0; i < 5; ++i) dm.col(i) = rng.normal_vec(5);
  const Mat da = dm + dm.transpose();
  const double h = 1e-6;
  const Mat fd = (reference_cholesky(a + h * da) - reference_cholesky(a - h * da)) / (2 * h);
  EXPECT_LT(relative_error(cholesky_tangent(cholesky(a), da), fd), 1e-6);
}

TEST(SpdInverse, InvertsRandomMatrix) {
  RngStream rng(4);
  const Mat a = random_spd(rng, 6);
  EXPECT_LT((spd_inverse(a) * a - Mat::Identity(6, 6)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Random, SameSeedAndStreamGiveIdenticalSequences) {
  RngStream a(42, 7);
  RngStream b(42, 7);
  RngStream c(42, 8);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const double x = a.normal();
    EXPECT_EQ(x, b.normal());
    differs |= x != c.normal();
    EXPECT_EQ(a.gamma(0.7, 2.0), b.gamma(0.7, 2.0));
    EXPECT_EQ(a.polya_gamma(1.5), b.polya_gamma(1.5));
  }
  EXPECT_TRUE(differs);
}

TEST(Random, WeibullReparameterizationAtInverseE) {
  EXPECT_NEAR(weibull_from_uniform(2.5, 0.7, std::exp(-1.0)), 2.5, 1e-14);
}

TEST(Random, PolyaGammaZeroMeanIsQuarter) {
  RngStream rng(5);
  const Vec v = sample(dist::PolyaGamma{0.0}, rng, 1000000);
  EXPECT_NEAR(v.mean(), 0.25, 0.002);
  // The truncated series itself: E = (1/(2π²)) Σ 1/(k-1/2)².
  double series = 0.0;
  for (int k = 1; k <= kPolyaGammaTerms; ++k) series += 1.0 / ((k - 0.5) * (k - 0.5));
  EXPECT_NEAR(series / (2 * M_PI * M_PI), 0.25, 1e-3);
}

TEST(Random, GammaOneOneMean) {
  RngStream rng(6);
  EXPECT_NEAR(sample(dist::Gamma{1.0, 1.0}, rng, 1000000).mean(), 1.0, 0.01);
}

TEST(Random, SamplerMomentsWithinFourStandardErrors) {
  RngStream rng(7);
  const int n = 1000000;
  struct Case {
    Distribution d;
    double mean;
    double var;
  };
  const double c = 1.3;
  const std::vector<Case> cases = {
      {dist::Gaussian{1.5, 4.0}, 1.5, 4.0},
      {dist::Gamma{0.3, 2.0}, 0.15, 0.075},
      {dist::Gamma{5.0, 0.5}, 10.0, 20.0},
      {dist::Beta{2.0, 3.0}, 0.4, 0.04},
      {dist::Uniform01{}, 0.5, 1.0 / 12.0},
      {dist::Weibull{2.0, 1.5}, 2.0 * std::tgamma(1 + 1 / 1.5),
       4.0 * (std::tgamma(1 + 2 / 1.5) - std::pow(std::tgamma(1 + 1 / 1.5), 2))},
      // PG(1, c) moments in closed form.
      {dist::PolyaGamma{c}, std::tanh(c / 2) / (2 * c),
       (std::sinh(c) - c) / (4 * c * c * c) / std::pow(std::cosh(c / 2), 2)},
  };
  for (const auto& cs : cases) {
    const Moments m = moments(sample(cs.d, rng, n));
    EXPECT_NEAR(m.mean, cs.mean, 4 * std::sqrt(cs.var / n));
    EXPECT_NEAR(m.var, cs.var, 0.01 * cs.var + 4 * cs.var * std::sqrt(2.0 / n) * 3);
  }
}

TEST(Random, PolyaGammaMomentHelpers) {
  for (double c : {0.0, 0.5, 2.0, 8.0}) {
    const double mean = c == 0 ? 0.25 : std::tanh(c / 2) / (2 * c);
    EXPECT_NEAR(polya_gamma_mean(c), mean, 1e-12);
  }
  EXPECT_NEAR(polya_gamma_variance(0.0), 1.0 / 24.0, 1e-12);
}

TEST(Random, PoissonMoments) {
  RngStream rng(8);
  for (double mean : {0.3, 4.0, 75.0}) {
    Vec v(200000);
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.poisson(mean);
    const Moments m = moments(v);
    EXPECT_NEAR(m.mean, mean, 4 * std::sqrt(mean / v.size()));
    EXPECT_NEAR(m.var, mean, 0.02 * mean);
  }
}

TEST(Random, InvalidParametersThrow) {
  RngStream rng(9);
  EXPECT_THROW(sample(dist::Gamma{-1.0, 1.0}, rng), std::invalid_argument);
  EXPECT_THROW(sample(dist::Gaussian{0.0, -1.0}, rng), std::invalid_argument);
  EXPECT_THROW(sample(dist::Beta{0.0, 1.0}, rng), std::invalid_argument);
}

TEST(FiniteDiff, QuadraticIsExact) {
  Vec x(2);
  x << 1, 2;
  const Vec g = finite_diff_grad([](const Vec& v) { return v.dot(v); }, x);
  EXPECT_NEAR(g[0], 2.0, 1e-8);
  EXPECT_NEAR(g[1], 4.0, 1e-8);
}

TEST(FiniteDiff, ConstantIsZero) {
  const Vec g = finite_diff_grad([](const Vec&) { return 3.0; }, Vec::Ones(4));
  EXPECT_LE(g.cwiseAbs().maxCoeff(), 1e-10);
}

TEST(FiniteDiff, ConjugateGaussianAnalyticGradient) {
  // log p(z) + Σ log N(x_i; z, s²) has gradient -z/v0 + Σ (x_i - z)/s².
  Mat data(3, 2);
  data << 0.5, -1.0, 1.5, 0.2, -0.3, 0.8;
  const ConjugateGaussianModel model(data, 2.0, 0.7);
  Vec z(2);
  z << 0.3, -0.4;
  const Vec analytic = -z / 2.0 + (data.colwise().sum().transpose() - 3.0 * z) / 0.49;
  const Vec fd = finite_diff_grad([&](const Vec& v) { return model.log_joint(v); }, z);
  EXPECT_LT((fd - analytic).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(FiniteDiff, NonFiniteThrows) {
  EXPECT_THROW(finite_diff_grad([](const Vec& v) { return std::log(v[0] - 1.0); }, Vec::Ones(1)), NumericError);
}

TEST(Csv, RoundTripIsExact) {
  Mat m(2, 3);
  m << 0.1, 1.0 / 3.0, -2e-300, 12345.678901234567, M_PI, 0.0;
  std::stringstream s;
  write_csv(s, {"a", "b", "c"}, m);
  const CsvTable t = parse_csv(s);
  EXPECT_EQ(t.header, (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(t.rows, m);
}

TEST(Csv, MalformedRowNamesLine) {
  std::stringstream s("a,b\n1,2\n3\n");
  try {
    parse_csv(s, "bad.csv");
    FAIL();
  } catch (const CsvError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.csv:3"), std::string::npos);
  }
}
