#include "mivi/discriminator.hpp"

#include <cmath>
#include <stdexcept>

namespace mivi {

double log_sigmoid(double x) {
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Mat columns(const std::vector<Vec>& vs) {
  if (vs.empty()) return Mat();
  Mat m(vs.front().size(), static_cast<Eigen::Index>(vs.size()));
  for (std::size_t i = 0; i < vs.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = vs[i];
  return m;
}

Discriminator::Discriminator(Eigen::Index dim, std::vector<int> hidden, RngStream& init_rng) {
  std::vector<int> sizes{static_cast<int>(dim)};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  net_ = Mlp(sizes, Mlp::Output::Linear);
  net_.initialize(init_rng, true);
}

Discriminator::Discriminator(Mlp net) : net_(std::move(net)) {
  if (net_.sizes().back() != 1 || net_.output() != Mlp::Output::Linear) {
    throw std::invalid_argument("Discriminator: network must have one linear output");
  }
}

double Discriminator::forward(const Vec& z) const { return net_.forward(z)(0, 0); }

Vec Discriminator::forward_batch(const Mat& zs) const { return net_.forward(zs).row(0).transpose(); }

Vec Discriminator::input_grad(const Vec& z) const { return input_grad_batch(z).col(0); }

Mat Discriminator::input_grad_batch(const Mat& zs, Vec* values) const {
  Mlp::Cache cache;
  const Mat out = net_.forward(zs, &cache);
  if (values) *values = out.row(0).transpose();
  return net_.backward(cache, Mat::Ones(1, zs.cols()), nullptr);
}

Discriminator::LossGrad Discriminator::loss_grad(const Mat& pos, const Mat& neg) const {
  if (pos.cols() == 0 || neg.cols() == 0) throw std::invalid_argument("Discriminator: empty sample set");
  LossGrad out{0.0, Vec::Zero(net_.num_params()), 0.0, 0.0};
  Mlp::Cache cache;

  const Mat dp = net_.forward(pos, &cache);
  Mat bar_p(1, pos.cols());
  for (Eigen::Index i = 0; i < pos.cols(); ++i) {
    out.loss += log_sigmoid(dp(0, i)) / pos.cols();
    bar_p(0, i) = (1.0 - sigmoid(dp(0, i))) / pos.cols();  // d/dx log σ(x) = 1 - σ(x)
  }
  net_.backward(cache, bar_p, &out.grad);
  out.mean_pos = dp.mean();

  const Mat dn = net_.forward(neg, &cache);
  Mat bar_n(1, neg.cols());
  for (Eigen::Index i = 0; i < neg.cols(); ++i) {
    out.loss += log_sigmoid(-dn(0, i)) / neg.cols();
    bar_n(0, i) = -sigmoid(dn(0, i)) / neg.cols();  // d/dx log(1 - σ(x)) = -σ(x)
  }
  net_.backward(cache, bar_n, &out.grad);
  out.mean_neg = dn.mean();
  return out;
}

double Discriminator::loss(const Mat& pos, const Mat& neg) const {
  if (pos.cols() == 0 || neg.cols() == 0) throw std::invalid_argument("Discriminator: empty sample set");
  const Vec dp = forward_batch(pos);
  const Vec dn = forward_batch(neg);
  double l = 0.0;
  for (Eigen::Index i = 0; i < dp.size(); ++i) l += log_sigmoid(dp[i]) / dp.size();
  for (Eigen::Index i = 0; i < dn.size(); ++i) l += log_sigmoid(-dn[i]) / dn.size();
  return l;
}

}  // namespace mivi
