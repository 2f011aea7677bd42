#include "mivi/adam.hpp"
#include "mivi/discriminator.hpp"
#include "mivi/finite_diff.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace mivi;

namespace {

Mat random_columns(RngStream& rng, Eigen::Index d, Eigen::Index n) {
  Mat m(d, n);
  for (Eigen::Index i = 0; i < n; ++i) m.col(i) = rng.normal_vec(d);
  return m;
}

Discriminator affine(const Vec& w, double b) {
  Mlp net({static_cast<int>(w.size()), 1}, Mlp::Output::Linear);
  Vec p(w.size() + 1);
  p << w, b;
  net.set_params(p);
  return Discriminator(net);
}

Discriminator random_disc(RngStream& rng, Eigen::Index d) {
  Discriminator disc(d, {7, 5}, rng);
  disc.set_params(0.7 * rng.normal_vec(disc.params().size()));
  return disc;
}

}  // namespace

TEST(Discriminator, ZeroInitializedLastLayerGivesZeroLogit) {
  RngStream rng(1);
  const Discriminator d(3, {16, 16}, rng);
  EXPECT_EQ(d.forward(rng.normal_vec(3)), 0.0);
  EXPECT_EQ(d.input_grad(rng.normal_vec(3)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Discriminator, AffineCase) {
  Vec w(2);
  w << 0.5, -2.0;
  const Discriminator d = affine(w, 0.25);
  Vec z(2);
  z << 3.0, 1.0;
  EXPECT_DOUBLE_EQ(d.forward(z), 0.5 * 3.0 - 2.0 + 0.25);
  EXPECT_EQ(d.input_grad(z), w);
}

TEST(Discriminator, DeterministicAndBatchConsistent) {
  RngStream rng(2);
  const Discriminator d = random_disc(rng, 3);
  const Mat zs = random_columns(rng, 3, 6);
  Vec values;
  const Mat grads = d.input_grad_batch(zs, &values);
  const Vec batch = d.forward_batch(zs);
  for (Eigen::Index i = 0; i < 6; ++i) {
    EXPECT_EQ(d.forward(zs.col(i)), d.forward(zs.col(i)));
    EXPECT_NEAR(batch[i], d.forward(zs.col(i)), 1e-14);
    EXPECT_NEAR(values[i], batch[i], 1e-14);
    EXPECT_LT((grads.col(i) - d.input_grad(zs.col(i))).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(Discriminator, ZeroLogitLoss) {
  RngStream rng(3);
  const Discriminator d(2, {4}, rng);
  EXPECT_NEAR(d.loss(random_columns(rng, 2, 5), random_columns(rng, 2, 3)), 2.0 * std::log(0.5), 1e-15);
}

TEST(Discriminator, LossGradientMatchesFiniteDifferences) {
  RngStream rng(4);
  for (int rep = 0; rep < 10; ++rep) {
    Discriminator d = random_disc(rng, 2);
    const Mat pos = random_columns(rng, 2, 9);
    const Mat neg = random_columns(rng, 2, 4);
    const Vec p0 = d.params();
    const Vec fd = finite_diff_grad(
        [&](const Vec& p) {
          d.set_params(p);
          return d.loss(pos, neg);
        },
        p0, 1e-6);
    d.set_params(p0);
    const auto lg = d.loss_grad(pos, neg);
    EXPECT_LE(relative_error(lg.grad, fd), 1e-5);
    EXPECT_NEAR(lg.loss, d.loss(pos, neg), 1e-14);
    EXPECT_NEAR(lg.mean_pos, d.forward_batch(pos).mean(), 1e-14);
  }
}

TEST(Discriminator, EqualSetsPushTowardZeroLogit) {
  RngStream rng(5);
  const Mat pts = random_columns(rng, 2, 20);
  // A constant offset b: the loss gradient in b is mean(1-σ(b)) - mean(σ(b)), which
  // has the sign of -b.
  for (double b : {-1.5, 0.8}) {
    const Discriminator d = affine(Vec::Zero(2), b);
    const auto lg = d.loss_grad(pts, pts);
    EXPECT_LT(lg.grad[2] * b, 0.0);
  }
}

TEST(Discriminator, InputGradientMatchesFiniteDifferences) {
  RngStream rng(6);
  for (int rep = 0; rep < 20; ++rep) {
    const Discriminator d = random_disc(rng, 3);
    const Vec z = rng.normal_vec(3);
    const Vec fd = finite_diff_grad([&](const Vec& x) { return d.forward(x); }, z, 1e-6);
    EXPECT_LE(relative_error(d.input_grad(z), fd), 1e-5);
  }
}

TEST(Sigmoid, StableTails) {
  EXPECT_NEAR(log_sigmoid(-800.0), -800.0, 1e-12);
  EXPECT_NEAR(log_sigmoid(800.0), 0.0, 1e-300);
  EXPECT_NEAR(sigmoid(0.0), 0.5, 1e-16);
}

TEST(Adam, ZeroGradientLeavesParams) {
  Vec p(3);
  p << 1, 2, 3;
  AdamState s(3);
  const Vec before = p;
  adam_update(p, Vec::Zero(3), s, AdamConfig{});
  EXPECT_EQ(p, before);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Vec p(3);
  p << 1, 2, 3;
  Vec g(3);
  g << 0.5, -20.0, 0.0;
  AdamState s(3);
  AdamConfig c;
  adam_update(p, g, s, c);
  // m̂ = g, v̂ = g², so the step is lr g / (|g| + eps).
  EXPECT_NEAR(p[0], 1.0 - c.lr * 0.5 / (0.5 + c.eps), 1e-15);
  EXPECT_NEAR(p[1], 2.0 + c.lr * 20.0 / (20.0 + c.eps), 1e-15);
  EXPECT_EQ(p[2], 3.0);
}

TEST(Adam, ConstantGradientMovesLearningRatePerStep) {
  Vec p = Vec::Zero(1);
  AdamState s(1);
  AdamConfig c;
  for (int i = 0; i < 10000; ++i) adam_update(p, Vec::Constant(1, 3.0), s, c);
  EXPECT_NEAR(p[0], -10000 * c.lr, 1e-6);
}
