#include "mivi/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace mivi {

namespace {

using ConstMap = Eigen::Map<const Mat>;

Mat softplus(const Mat& x) {
  return x.unaryExpr([](double v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); });
}

// tanh through the vectorized exp; Eigen's double tanh is scalar.
Mat tanh_fast(const Mat& x) { return 1.0 - 2.0 / ((2.0 * x.array()).exp() + 1.0); }

Mat sigmoid(const Mat& x) {
  return x.unaryExpr([](double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
}

}  // namespace

Mlp::Mlp(std::vector<int> sizes, Output output) : sizes_(std::move(sizes)), output_(output) {
  if (sizes_.size() < 2) throw std::invalid_argument("Mlp: need at least input and output sizes");
  Eigen::Index total = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    if (sizes_[l] <= 0 || sizes_[l + 1] <= 0) throw std::invalid_argument("Mlp: layer sizes must be positive");
    offsets_.push_back(total);
    total += static_cast<Eigen::Index>(sizes_[l + 1]) * (sizes_[l] + 1);
  }
  params_ = Vec::Zero(total);
}

void Mlp::initialize(RngStream& rng, bool zero_last_layer) {
  const std::size_t layers = sizes_.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const Eigen::Index n = static_cast<Eigen::Index>(sizes_[l + 1]) * sizes_[l];
    const double bound = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
    for (Eigen::Index i = 0; i < n; ++i) {
      params_[weight_offset(l) + i] =
          (zero_last_layer && l + 1 == layers) ? 0.0 : bound * (2.0 * rng.uniform() - 1.0);
    }
    params_.segment(bias_offset(l), sizes_[l + 1]).setZero();
  }
}

void Mlp::set_params(const Vec& p) {
  if (p.size() != params_.size()) {
    throw std::invalid_argument("Mlp::set_params: expected " + std::to_string(params_.size()) +
                                " values, got " + std::to_string(p.size()));
  }
  params_ = p;
}

Mat Mlp::forward(const Mat& input, Cache* cache) const {
  if (input.rows() != sizes_.front()) throw std::invalid_argument("Mlp::forward: input has wrong dimension");
  const std::size_t layers = sizes_.size() - 1;
  Mat a = input;
  if (cache) {
    cache->activations.clear();
    cache->activations.push_back(input);
  }
  for (std::size_t l = 0; l < layers; ++l) {
    ConstMap w(params_.data() + weight_offset(l), sizes_[l + 1], sizes_[l]);
    const auto b = params_.segment(bias_offset(l), sizes_[l + 1]);
    Mat pre = w * a;
    pre.colwise() += b;
    if (l + 1 < layers) {
      a = tanh_fast(pre);
      if (cache) cache->activations.push_back(a);
    } else {
      if (cache) cache->pre_output = pre;
      return output_ == Output::Softplus ? softplus(pre) : pre;
    }
  }
  return a;
}

Mat Mlp::backward(const Cache& cache, const Mat& out_bar, Vec* param_grad) const {
  const std::size_t layers = sizes_.size() - 1;
  if (param_grad && param_grad->size() != params_.size()) {
    throw std::invalid_argument("Mlp::backward: gradient buffer has wrong size");
  }
  Mat delta = out_bar;
  if (output_ == Output::Softplus) delta = delta.cwiseProduct(sigmoid(cache.pre_output));
  for (std::size_t l = layers; l-- > 0;) {
    const Mat& a = cache.activations[l];
    ConstMap w(params_.data() + weight_offset(l), sizes_[l + 1], sizes_[l]);
    if (param_grad) {
      Eigen::Map<Mat> gw(param_grad->data() + weight_offset(l), sizes_[l + 1], sizes_[l]);
      gw.noalias() += delta * a.transpose();
      param_grad->segment(bias_offset(l), sizes_[l + 1]) += delta.rowwise().sum();
    }
    Mat prev = w.transpose() * delta;
    if (l > 0) prev.array() *= (1.0 - a.array().square());
    delta = std::move(prev);
  }
  return delta;
}

}  // namespace mivi
