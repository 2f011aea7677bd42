#pragma once

#include "mivi/mlp.hpp"
#include "mivi/random.hpp"
#include "mivi/tensor.hpp"

#include <vector>

namespace mivi {

/// Density-ratio discriminator: an MLP logit D(z) ≈ log q̃(z)/q(z), tanh hidden
/// layers and a linear output initialized at zero.
class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(Eigen::Index dim, std::vector<int> hidden, RngStream& init_rng);
  /// Wraps an existing network (scalar output, linear).
  explicit Discriminator(Mlp net);

  Eigen::Index dim() const { return net_.input_dim(); }
  const Vec& params() const { return net_.params(); }
  void set_params(const Vec& p) { net_.set_params(p); }
  const Mlp& network() const { return net_; }

  double forward(const Vec& z) const;
  /// Logits for a batch of points stored as columns.
  Vec forward_batch(const Mat& zs) const;
  /// ∂D/∂z.
  Vec input_grad(const Vec& z) const;
  /// ∂D/∂z for every column; optionally also returns the logits.
  Mat input_grad_batch(const Mat& zs, Vec* values = nullptr) const;

  struct LossGrad {
    double loss;  // (1/|pos|) Σ log σ(D) + (1/|neg|) Σ log(1 - σ(D)), to be maximized
    Vec grad;     // gradient of loss w.r.t. params
    double mean_pos = 0.0;  // mean logit on each set
    double mean_neg = 0.0;
  };
  LossGrad loss_grad(const Mat& pos, const Mat& neg) const;
  double loss(const Mat& pos, const Mat& neg) const;

 private:
  Mlp net_;
};

/// Stable log σ(x) = -softplus(-x).
double log_sigmoid(double x);
double sigmoid(double x);

/// Packs a list of vectors as matrix columns.
Mat columns(const std::vector<Vec>& vs);

}  // namespace mivi
