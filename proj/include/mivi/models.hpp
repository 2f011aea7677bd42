#pragma once

#include "mivi/tensor.hpp"

#include <cmath>
#include <memory>
#include <string>
#include <vector>

namespace mivi {

/// A target posterior over an unconstrained latent z for a fixed dataset.
///
/// When a minibatch of size n is passed the likelihood term is scaled by N/n,
/// so every method returns an unbiased estimate of the full-data quantity.
/// An empty batch means the full dataset.
class TargetModel {
 public:
  virtual ~TargetModel() = default;

  virtual Eigen::Index dim() const = 0;
  virtual std::size_t num_data() const { return 0; }

  virtual double log_joint(const Vec& z, const Batch& batch = {}) const = 0;
  virtual Vec grad_z(const Vec& z, const Batch& batch = {}) const = 0;
  /// Hessian of log_joint at z applied to v.
  virtual Vec hvp(const Vec& z, const Vec& v, const Batch& batch = {}) const = 0;

  virtual std::vector<std::string> variable_names() const;

  // Learnable model parameters θ. Empty for every model here except the
  // conjugate Gaussian, whose noise scale exercises the θ-update path.
  virtual Eigen::Index num_theta() const { return 0; }
  virtual Vec theta() const { return Vec(); }
  virtual void set_theta(const Vec& /*theta*/) {}
  virtual Vec grad_theta(const Vec& /*z*/, const Batch& /*batch*/ = {}) const { return Vec(); }

 protected:
  /// N/n for a minibatch, 1 for the full data. Validates indices.
  double likelihood_scale(const Batch& batch) const;
  void check_dim(const Vec& z) const;
};

// ---------------------------------------------------------------------------
// Bivariate toy targets

/// Multivariate normal N(mean, cov).
class GaussianTarget final : public TargetModel {
 public:
  GaussianTarget(Vec mean, Mat cov);

  Eigen::Index dim() const override { return mean_.size(); }
  double log_joint(const Vec& z, const Batch& batch = {}) const override;
  Vec grad_z(const Vec& z, const Batch& batch = {}) const override;
  Vec hvp(const Vec& z, const Vec& v, const Batch& batch = {}) const override;

  const Vec& mean() const { return mean_; }
  const Mat& cov() const { return cov_; }
  const Mat& precision() const { return precision_; }

 private:
  Vec mean_;
  Mat cov_;
  Mat precision_;
  double log_norm_;
};

/// N(z1; z2²/4, 1) · N(z2; 0, 4).
class BananaTarget final : public TargetModel {
 public:
  Eigen::Index dim() const override { return 2; }
  double log_joint(const Vec& z, const Batch& batch = {}) const override;
  Vec grad_z(const Vec& z, const Batch& batch = {}) const override;
  Vec hvp(const Vec& z, const Vec& v, const Batch& batch = {}) const override;
};

/// Finite mixture of multivariate normals.
class GaussianMixtureTarget final : public TargetModel {
 public:
  GaussianMixtureTarget(std::vector<double> weights, std::vector<GaussianTarget> components);

  Eigen::Index dim() const override { return components_.front().dim(); }
  double log_joint(const Vec& z, const Batch& batch = {}) const override;
  Vec grad_z(const Vec& z, const Batch& batch = {}) const override;
  Vec hvp(const Vec& z, const Vec& v, const Batch& batch = {}) const override;

  /// Posterior component responsibilities at z.
  Vec responsibilities(const Vec& z) const;
  const std::vector<GaussianTarget>& components() const { return components_; }

 private:
  std::vector<double> log_weights_;
  std::vector<GaussianTarget> components_;
};

enum class ToyVariant { CorrelatedGaussian, Banana, GaussianMixture };

ToyVariant parse_toy_variant(const std::string& name);
std::string to_string(ToyVariant v);
/// The three bivariate targets with their literal constants.
std::unique_ptr<TargetModel> make_toy_target(ToyVariant v);

// ---------------------------------------------------------------------------
// Conjugate Gaussian: z ~ N(0, τ² I), x_i | z ~ N(z, s² I) with θ = log s.

class ConjugateGaussianModel final : public TargetModel {
 public:
  /// data: N × d, one observation per row.
  ConjugateGaussianModel(Mat data, double prior_var, double noise_sd);

  Eigen::Index dim() const override { return data_.cols(); }
  std::size_t num_data() const override { return static_cast<std::size_t>(data_.rows()); }
  double log_joint(const Vec& z, const Batch& batch = {}) const override;
  Vec grad_z(const Vec& z, const Batch& batch = {}) const override;
  Vec hvp(const Vec& z, const Vec& v, const Batch& batch = {}) const override;

  Eigen::Index num_theta() const override { return 1; }
  Vec theta() const override;
  void set_theta(const Vec& theta) override;
  Vec grad_theta(const Vec& z, const Batch& batch = {}) const override;

  double log_evidence() const;
  Vec posterior_mean() const;
  double posterior_var() const;
  double noise_sd() const { return noise_sd_; }

 private:
  Mat data_;
  double prior_var_;
  double noise_sd_;
};

// ---------------------------------------------------------------------------
// Negative binomial: p(x) = Γ(x+r)/(Γ(r) x!) pˣ (1-p)ʳ, r ~ Gamma(0.1, 0.1),
// p ~ Beta(0.1, 0.1), latent z = (log r, logit p) with the transform Jacobian.

class NBModel final : public TargetModel {
 public:
  struct Prior {
    double r_shape = 0.1;
    double r_rate = 0.1;
    double p_a = 0.1;
    double p_b = 0.1;
  };

  explicit NBModel(std::vector<int> counts);
  NBModel(std::vector<int> counts, Prior prior);

  Eigen::Index dim() const override { return 2; }
  std::size_t num_data() const override { return counts_.size(); }
  double log_joint(const Vec& z, const Batch& batch = {}) const override;
  Vec grad_z(const Vec& z, const Batch& batch = {}) const override;
  Vec hvp(const Vec& z, const Vec& v, const Batch& batch = {}) const override;
  std::vector<std::string> variable_names() const override { return {"log_r", "logit_p"}; }

  /// Log posterior density (unnormalized) in (r, p) space.
  double log_density_rp(double r, double p) const;

  const std::vector<int>& counts() const { return counts_; }
  const Prior& prior() const { return prior_; }

 private:
  struct Terms {
    double value = 0.0;
    Vec grad = Vec::Zero(2);
    Mat hess = Mat::Zero(2, 2);
  };
  // Sufficient statistics: tail[k] = #{i : x_i > k}, so that
  // Σ_i [log Γ(x_i + r) - log Γ(r)] = Σ_k tail[k] log(r + k).
  struct Stats {
    std::vector<double> tail;
    double n = 0.0;
    double sum_x = 0.0;
    double sum_lgamma_x1 = 0.0;
  };
  Stats batch_stats(const Batch& batch) const;
  Terms evaluate(const Vec& z, const Batch& batch, int order) const;

  std::vector<int> counts_;
  Prior prior_;
  Stats full_;
};

struct NbGridSpec {
  double r_min = 0.0;
  double r_max = 10.0;
  double p_min = 0.0;
  double p_max = 1.0;
  int n_r = 400;
  int n_p = 400;
};

struct NbGridPosterior {
  Vec r;        // cell midpoints
  Vec p;
  Mat density;  // n_r × n_p, integrates to 1 over the box
  double cell_area = 0.0;
  double mean_r = 0.0;
  double mean_p = 0.0;
  Mat cov_rp;   // 2×2 in (r, p)
  Vec mean_z;   // moments of z = (log r, logit p)
  Mat cov_z;
  double log_normalizer = 0.0;
  double corr_rp() const;
};

/// Quadrature posterior over (r, p) on a midpoint grid. Throws if the
/// normalizer drifts by more than 1e-3 when the grid is refined 2×.
NbGridPosterior nb_grid_posterior(const NBModel& model, const NbGridSpec& spec);
/// Locates the posterior on a coarse full-range grid, then integrates on a
/// refined box spanning ±10 posterior sd.
NbGridPosterior nb_grid_posterior_auto(const NBModel& model, int cells = 400);

// ---------------------------------------------------------------------------
// Bayesian logistic regression with N(0, I) prior on β.

class LogisticModel final : public TargetModel {
 public:
  LogisticModel(Mat x, Vec y);

  Eigen::Index dim() const override { return x_.cols(); }
  std::size_t num_data() const override { return static_cast<std::size_t>(x_.rows()); }
  double log_joint(const Vec& z, const Batch& batch = {}) const override;
  Vec grad_z(const Vec& z, const Batch& batch = {}) const override;
  Vec hvp(const Vec& z, const Vec& v, const Batch& batch = {}) const override;
  std::vector<std::string> variable_names() const override;

  const Mat& x() const { return x_; }
  const Vec& y() const { return y_; }
  /// κ_i = y_i - 1/2.
  Vec kappa() const { return y_.array() - 0.5; }

 private:
  Mat x_;
  Vec y_;
};

// ---------------------------------------------------------------------------
// Bayesian bridge regression: y ~ N(Xβ, σ² I), p(β_v) ∝ exp(-ρ |β_v/σ|^α),
// 1/σ² ~ Gamma(r, c). Latent z = (β_1..β_p, log σ²).

class BridgeModel final : public TargetModel {
 public:
  BridgeModel(Mat x, Vec y, double alpha, double rho, double r = 1.0, double c = 1.0);

  Eigen::Index dim() const override { return x_.cols() + 1; }
  std::size_t num_data() const override { return static_cast<std::size_t>(x_.rows()); }
  double log_joint(const Vec& z, const Batch& batch = {}) const override;
  Vec grad_z(const Vec& z, const Batch& batch = {}) const override;
  Vec hvp(const Vec& z, const Vec& v, const Batch& batch = {}) const override;
  std::vector<std::string> variable_names() const override;

  Eigen::Index num_coef() const { return x_.cols(); }
  const Mat& x() const { return x_; }
  const Vec& y() const { return y_; }
  const Mat& xtx() const { return xtx_; }
  const Vec& xty() const { return xty_; }
  double alpha() const { return alpha_; }
  double rho() const { return rho_; }
  double gamma_shape() const { return r_; }
  double gamma_rate() const { return c_; }
  /// ρ^(2/α), the scale of Λ inside the β full conditional.
  double penalty_scale() const { return std::pow(rho_, 2.0 / alpha_); }

 private:
  struct Stats {
    double scale;
    double n;
    double rss;
    Vec xt_resid;  // Xᵀ(y - Xβ) over the batch
    Mat xtx;
  };
  Stats batch_stats(const Vec& beta, const Batch& batch, bool need_xtx) const;

  Mat x_;
  Vec y_;
  double alpha_;
  double rho_;
  double r_;
  double c_;
  Mat xtx_;
  Vec xty_;
  double yty_;
};

// ---------------------------------------------------------------------------

struct RegressionData {
  std::vector<std::string> names;
  Mat x;  // standardized: zero-mean columns with unit Euclidean norm
  Vec y;  // centered
  Vec x_mean;
  Vec x_norm;
  double y_mean = 0.0;
};

/// Reads the diabetes CSV (header, 10 predictors, response last), centers y
/// and standardizes each predictor to zero mean and unit norm.
RegressionData load_diabetes(const std::string& path);

/// Centers and scales columns to unit norm; centers y.
RegressionData standardize(std::vector<std::string> names, const Mat& x, const Vec& y);

/// Least-squares coefficients from the normal equations.
Vec ols(const Mat& x, const Vec& y);

}  // namespace mivi
