#pragma once

#include "mivi/mlp.hpp"
#include "mivi/models.hpp"
#include "mivi/random.hpp"
#include "mivi/tensor.hpp"
#include "mivi/variational.hpp"

#include <memory>
#include <string>
#include <vector>

namespace mivi {

/// Exogenous randomness of one transition. Recording it makes the kernel a
/// deterministic function z' = f_η(z, noise) that can be replayed and
/// differentiated.
struct StepNoise {
  Vec normal;   // standard normal draws
  Vec aux;      // kernel-specific (uniforms, gamma draws)
  Batch batch;  // minibatch indices, empty = full data
};

/// A reparameterizable Markov kernel with learnable parameters η packed into
/// one flat vector.
class Kernel {
 public:
  virtual ~Kernel() = default;

  virtual std::string name() const = 0;
  virtual Eigen::Index dim() const = 0;
  virtual const Vec& params() const = 0;
  virtual void set_params(const Vec& eta) = 0;

  virtual StepNoise draw_noise(RngStream& rng) const = 0;
  virtual Vec step(const Vec& z, const StepNoise& noise) const = 0;

  /// Reverse-mode derivative of one step. Given the cotangent of the output,
  /// adds ∂/∂η into *eta_bar and returns the cotangent of the input z.
  virtual Vec backward(const Vec& z, const StepNoise& noise, const Vec& out_bar,
                       Vec* eta_bar) const = 0;

  /// Draw noise and step.
  Vec sample(const Vec& z, RngStream& rng, StepNoise* record = nullptr) const;
};

/// z_0, ..., z_T with the noise that produced each step.
struct Chain {
  std::vector<Vec> z;
  std::vector<StepNoise> noise;  // noise[t-1] produced z[t]
  Eigen::Index length() const { return static_cast<Eigen::Index>(noise.size()); }
};

Chain run_chain(const Kernel& kernel, const Vec& z0, int steps, RngStream& rng);

/// Recomputes a chain from z_0 and its recorded noise.
Chain replay_chain(const Kernel& kernel, const Vec& z0, const std::vector<StepNoise>& noise);

/// Backpropagates per-state cotangents z_bar[t] (t = 0..T) through the chain.
/// Adds ∂/∂η into *eta_bar and returns the total cotangent of z_0.
Vec backprop_chain(const Kernel& kernel, const Chain& chain, const std::vector<Vec>& z_bar,
                   Vec* eta_bar);

// ---------------------------------------------------------------------------

/// Stochastic gradient Langevin dynamics with a learnable, time-invariant
/// step: z' = z + (η/2) ⊙ ∇log p(z) + √η ⊙ ξ. η = exp(log_step) is a scalar or
/// one value per coordinate.
class SgldKernel final : public Kernel {
 public:
  /// minibatch = 0 uses the full dataset.
  SgldKernel(const TargetModel& model, double log_step, bool per_dimension,
             std::size_t minibatch = 0);

  std::string name() const override { return "sgld"; }
  Eigen::Index dim() const override { return model_->dim(); }
  const Vec& params() const override { return log_step_; }
  void set_params(const Vec& eta) override;

  StepNoise draw_noise(RngStream& rng) const override;
  Vec step(const Vec& z, const StepNoise& noise) const override;
  Vec backward(const Vec& z, const StepNoise& noise, const Vec& out_bar,
               Vec* eta_bar) const override;

  /// Step sizes as a length-d vector.
  Vec step_sizes() const;
  const TargetModel& model() const { return *model_; }
  std::size_t minibatch() const { return minibatch_; }

 private:
  const TargetModel* model_;
  Vec log_step_;
  std::size_t minibatch_;
};

/// One SGLD update with explicit step sizes and injected noise ε.
Vec sgld_step(const TargetModel& model, const Vec& z, const Vec& step, const Vec& eps,
              const Batch& batch = {});

/// Forward-mode Jacobians of an unrolled SGLD chain started at
/// z_0 = mean + sd ⊙ ε_0.
struct SgldChainJacobian {
  Vec z_final;
  Mat d_eta;  // d × |η| (derivative w.r.t. the log step parameters)
  Mat d_phi;  // d × 2d, columns ordered [mean; log_var]
};

SgldChainJacobian sgld_chain_jacobian(const SgldKernel& kernel, const VariationalParams& phi,
                                      const Vec& eps0, const std::vector<StepNoise>& noise);

// ---------------------------------------------------------------------------

/// Gaussian full conditional of β in PG-augmented logistic regression with a
/// N(0, I) prior: Σ = (XᵀΩX + I)⁻¹, μ = ΣXᵀκ, β = μ + chol(Σ) ξ.
struct BetaConditional {
  Mat sigma;
  Mat chol;
  Vec b;  // Xᵀκ
  Vec mean;
  Vec beta;
};

BetaConditional logistic_beta_conditional(const Mat& x, const Vec& kappa, const Vec& omega,
                                          const Vec& xi);

/// ω_i = g_η(x_iᵀβ, ε_i) from a small MLP, then the exact β conditional.
/// Noise layout: normal = [ε_1..ε_n, ξ_1..ξ_p].
class LogisticKernel final : public Kernel {
 public:
  LogisticKernel(const LogisticModel& model, std::vector<int> hidden, RngStream& init_rng);

  std::string name() const override { return "logistic"; }
  Eigen::Index dim() const override { return model_->dim(); }
  const Vec& params() const override { return net_.params(); }
  void set_params(const Vec& eta) override { net_.set_params(eta); }

  StepNoise draw_noise(RngStream& rng) const override;
  Vec step(const Vec& z, const StepNoise& noise) const override;
  Vec backward(const Vec& z, const StepNoise& noise, const Vec& out_bar,
               Vec* eta_bar) const override;

  /// ω for the given β and data noise ε.
  Vec omega(const Vec& beta, const Vec& eps) const;
  const Mlp& network() const { return net_; }

 private:
  Mat net_input(const Vec& beta, const Vec& eps) const;

  const LogisticModel* model_;
  Mlp net_;
  Vec kappa_;
};

// ---------------------------------------------------------------------------

/// Gibbs-style bridge kernel on z = (β, log σ²) with learned Weibull(a_v, b_v)
/// surrogates for the local scales λ_v. Parameters are interleaved
/// (log a_1, log b_1, ..., log a_p, log b_p). Noise layout: normal = ξ (p),
/// aux = [u_1..u_p, g] with u uniform and g ~ Gamma(r + (n+p)/2, 1).
class BridgeKernel final : public Kernel {
 public:
  BridgeKernel(const BridgeModel& model, Vec log_ab);

  std::string name() const override { return "bridge"; }
  Eigen::Index dim() const override { return model_->dim(); }
  const Vec& params() const override { return log_ab_; }
  void set_params(const Vec& eta) override;

  StepNoise draw_noise(RngStream& rng) const override;
  Vec step(const Vec& z, const StepNoise& noise) const override;
  Vec backward(const Vec& z, const StepNoise& noise, const Vec& out_bar,
               Vec* eta_bar) const override;

  /// Full forward-mode Jacobian of one step: d × (2p + 1), columns are the η
  /// coordinates followed by log σ² of the input.
  Mat step_jacobian(const Vec& z, const StepNoise& noise) const;

  Vec lambda(const StepNoise& noise) const;
  const BridgeModel& model() const { return *model_; }

 private:
  const BridgeModel* model_;
  Vec log_ab_;
};

/// Weibull initialization: b_v = 1 and a_v matched to the λ that makes the
/// Gaussian prior scale agree with the bridge penalty at the OLS estimate.
Vec bridge_initial_params(const BridgeModel& model);

// ---------------------------------------------------------------------------

/// Runs a kernel as a standalone sampler for `steps` iterations and keeps the
/// states after the first `burn_in`.
SampleTable extrapolate(const Kernel& kernel, const Vec& init, int steps, int burn_in,
                        RngStream& rng, std::vector<std::string> names = {});

}  // namespace mivi
