#include "mivi/transitions.hpp"

#include "mivi/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>

namespace mivi {

Vec Kernel::sample(const Vec& z, RngStream& rng, StepNoise* record) const {
  StepNoise noise = draw_noise(rng);
  Vec out = step(z, noise);
  if (record) *record = std::move(noise);
  return out;
}

Chain run_chain(const Kernel& kernel, const Vec& z0, int steps, RngStream& rng) {
  if (steps < 0) throw std::invalid_argument("run_chain: negative length");
  Chain chain;
  chain.z.reserve(steps + 1);
  chain.noise.reserve(steps);
  chain.z.push_back(z0);
  for (int t = 0; t < steps; ++t) {
    chain.noise.push_back(kernel.draw_noise(rng));
    chain.z.push_back(kernel.step(chain.z.back(), chain.noise.back()));
  }
  return chain;
}

Chain replay_chain(const Kernel& kernel, const Vec& z0, const std::vector<StepNoise>& noise) {
  Chain chain;
  chain.z.push_back(z0);
  chain.noise = noise;
  for (const auto& n : noise) chain.z.push_back(kernel.step(chain.z.back(), n));
  return chain;
}

Vec backprop_chain(const Kernel& kernel, const Chain& chain, const std::vector<Vec>& z_bar,
                   Vec* eta_bar) {
  const std::size_t steps = chain.noise.size();
  if (z_bar.size() != steps + 1) {
    throw std::invalid_argument("backprop_chain: need one cotangent per state");
  }
  Vec carry = z_bar[steps];
  for (std::size_t t = steps; t-- > 0;) {
    carry = kernel.backward(chain.z[t], chain.noise[t], carry, eta_bar);
    carry += z_bar[t];
  }
  return carry;
}

// ---------------------------------------------------------------------------
// SGLD

namespace {

Batch draw_batch(RngStream& rng, std::size_t n_data, std::size_t size) {
  if (size == 0 || size >= n_data) return {};
  // Floyd's sampling without replacement, returned sorted.
  std::set<std::size_t> picked;
  for (std::size_t j = n_data - size; j < n_data; ++j) {
    const std::size_t t = static_cast<std::size_t>(rng.below(j + 1));
    if (!picked.insert(t).second) picked.insert(j);
  }
  return Batch(picked.begin(), picked.end());
}

}  // namespace

Vec sgld_step(const TargetModel& model, const Vec& z, const Vec& step, const Vec& eps,
              const Batch& batch) {
  require_same_size(z, step, "sgld_step");
  require_same_size(z, eps, "sgld_step");
  const Vec g = model.grad_z(z, batch);
  ensure_finite(g, "sgld_step gradient");
  return z + (0.5 * step.array() * g.array()).matrix() + eps;
}

SgldKernel::SgldKernel(const TargetModel& model, double log_step, bool per_dimension,
                       std::size_t minibatch)
    : model_(&model),
      log_step_(Vec::Constant(per_dimension ? model.dim() : 1, log_step)),
      minibatch_(minibatch) {}

void SgldKernel::set_params(const Vec& eta) {
  if (eta.size() != log_step_.size()) throw std::invalid_argument("SgldKernel: wrong parameter size");
  ensure_finite(eta, "SgldKernel log step");
  log_step_ = eta;
}

Vec SgldKernel::step_sizes() const {
  if (log_step_.size() == 1) return Vec::Constant(dim(), std::exp(log_step_[0]));
  return log_step_.array().exp();
}

StepNoise SgldKernel::draw_noise(RngStream& rng) const {
  StepNoise noise;
  noise.normal = rng.normal_vec(dim());
  noise.batch = draw_batch(rng, model_->num_data(), minibatch_);
  return noise;
}

Vec SgldKernel::step(const Vec& z, const StepNoise& noise) const {
  const Vec eta = step_sizes();
  return sgld_step(*model_, z, eta, (eta.array().sqrt() * noise.normal.array()).matrix(), noise.batch);
}

Vec SgldKernel::backward(const Vec& z, const StepNoise& noise, const Vec& out_bar,
                         Vec* eta_bar) const {
  const Vec eta = step_sizes();
  const Vec scaled = (0.5 * eta.array() * out_bar.array()).matrix();
  Vec z_bar = out_bar + model_->hvp(z, scaled, noise.batch);
  if (eta_bar) {
    const Vec g = model_->grad_z(z, noise.batch);
    // d z'_i / d log η_i = η_i (g_i / 2 + ξ_i / (2 √η_i))
    const Vec dz = eta.array() * (0.5 * g.array() + 0.5 * noise.normal.array() / eta.array().sqrt());
    const Vec contrib = out_bar.cwiseProduct(dz);
    if (log_step_.size() == 1) {
      (*eta_bar)[0] += contrib.sum();
    } else {
      *eta_bar += contrib;
    }
  }
  return z_bar;
}

SgldChainJacobian sgld_chain_jacobian(const SgldKernel& kernel, const VariationalParams& phi,
                                      const Vec& eps0, const std::vector<StepNoise>& noise) {
  const Eigen::Index d = kernel.dim();
  const Eigen::Index k = kernel.params().size();
  const Vec eta = kernel.step_sizes();
  const TargetModel& model = kernel.model();

  SgldChainJacobian out;
  out.z_final = q_transform(phi, eps0);
  out.d_eta = Mat::Zero(d, k);
  out.d_phi = Mat::Zero(d, 2 * d);
  const Vec sd = phi.sd();
  for (Eigen::Index i = 0; i < d; ++i) {
    out.d_phi(i, i) = 1.0;
    out.d_phi(i, d + i) = 0.5 * sd[i] * eps0[i];
  }

  for (const StepNoise& n : noise) {
    const Vec& z = out.z_final;
    const Vec g = model.grad_z(z, n.batch);
    const Vec direct = eta.array() * (0.5 * g.array() + 0.5 * n.normal.array() / eta.array().sqrt());
    // Tangent map of one step: dz' = dz + (η/2) ⊙ H dz.
    auto push = [&](const Vec& dz) -> Vec {
      return dz + (0.5 * eta.array() * model.hvp(z, dz, n.batch).array()).matrix();
    };
    for (Eigen::Index c = 0; c < out.d_phi.cols(); ++c) out.d_phi.col(c) = push(out.d_phi.col(c));
    for (Eigen::Index c = 0; c < k; ++c) {
      Vec col = push(out.d_eta.col(c));
      if (k == 1) {
        col += direct;
      } else {
        col[c] += direct[c];
      }
      out.d_eta.col(c) = col;
    }
    out.z_final = kernel.step(z, n);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Logistic

BetaConditional logistic_beta_conditional(const Mat& x, const Vec& kappa, const Vec& omega,
                                          const Vec& xi) {
  if (omega.size() != x.rows() || kappa.size() != x.rows() || xi.size() != x.cols()) {
    throw std::invalid_argument("logistic_beta_conditional: dimension mismatch");
  }
  if ((omega.array() < 0.0).any()) throw std::invalid_argument("logistic_beta_conditional: negative omega");
  BetaConditional out;
  Mat a = x.transpose() * omega.asDiagonal() * x;
  a.diagonal().array() += 1.0;
  out.sigma = spd_inverse(a);
  out.sigma = 0.5 * (out.sigma + out.sigma.transpose());
  out.chol = cholesky(out.sigma);
  out.b = x.transpose() * kappa;
  out.mean = out.sigma * out.b;
  out.beta = out.mean + out.chol * xi;
  return out;
}

LogisticKernel::LogisticKernel(const LogisticModel& model, std::vector<int> hidden,
                               RngStream& init_rng)
    : model_(&model), kappa_(model.kappa()) {
  std::vector<int> sizes{2};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  net_ = Mlp(sizes, Mlp::Output::Softplus);
  net_.initialize(init_rng, false);
}

StepNoise LogisticKernel::draw_noise(RngStream& rng) const {
  StepNoise noise;
  noise.normal = rng.normal_vec(static_cast<Eigen::Index>(model_->num_data()) + dim());
  return noise;
}

Mat LogisticKernel::net_input(const Vec& beta, const Vec& eps) const {
  Mat in(2, model_->x().rows());
  in.row(0) = (model_->x() * beta).transpose();
  in.row(1) = eps.transpose();
  return in;
}

Vec LogisticKernel::omega(const Vec& beta, const Vec& eps) const {
  return net_.forward(net_input(beta, eps)).row(0).transpose();
}

Vec LogisticKernel::step(const Vec& z, const StepNoise& noise) const {
  const Eigen::Index n = model_->x().rows();
  const Vec w = omega(z, noise.normal.head(n));
  return logistic_beta_conditional(model_->x(), kappa_, w, noise.normal.tail(dim())).beta;
}

Vec LogisticKernel::backward(const Vec& z, const StepNoise& noise, const Vec& out_bar,
                             Vec* eta_bar) const {
  const Mat& x = model_->x();
  const Eigen::Index n = x.rows();
  Mlp::Cache cache;
  const Vec w = net_.forward(net_input(z, noise.normal.head(n)), &cache).row(0).transpose();
  const Vec xi = noise.normal.tail(dim());
  const BetaConditional c = logistic_beta_conditional(x, kappa_, w, xi);

  // β' = Σ b + L ξ with L = chol(Σ).
  const Mat l_bar = (out_bar * xi.transpose()).triangularView<Eigen::Lower>();
  const Mat mean_part = out_bar * c.b.transpose();
  const Mat sigma_bar = 0.5 * (mean_part + mean_part.transpose()) + cholesky_adjoint(c.chol, l_bar);
  // Σ = A⁻¹ and A = XᵀΩX + I.
  const Mat a_bar = -c.sigma * sigma_bar * c.sigma;
  Mat omega_bar(1, n);
  omega_bar.row(0) = ((x * a_bar).cwiseProduct(x)).rowwise().sum().transpose();
  const Mat in_bar = net_.backward(cache, omega_bar, eta_bar);
  return x.transpose() * in_bar.row(0).transpose();
}

// ---------------------------------------------------------------------------
// Bridge

BridgeKernel::BridgeKernel(const BridgeModel& model, Vec log_ab) : model_(&model) {
  set_params(log_ab);
}

void BridgeKernel::set_params(const Vec& eta) {
  if (eta.size() != 2 * model_->num_coef()) {
    throw std::invalid_argument("BridgeKernel: expected " + std::to_string(2 * model_->num_coef()) +
                                " parameters");
  }
  ensure_finite(eta, "BridgeKernel parameters");
  log_ab_ = eta;
}

StepNoise BridgeKernel::draw_noise(RngStream& rng) const {
  const Eigen::Index p = model_->num_coef();
  StepNoise noise;
  noise.aux.resize(p + 1);
  for (Eigen::Index v = 0; v < p; ++v) noise.aux[v] = rng.uniform();
  const double shape = model_->gamma_shape() + 0.5 * static_cast<double>(model_->num_data() + p);
  noise.aux[p] = rng.gamma(shape, 1.0);
  noise.normal = rng.normal_vec(p);
  return noise;
}

Vec BridgeKernel::lambda(const StepNoise& noise) const {
  const Eigen::Index p = model_->num_coef();
  Vec lam(p);
  for (Eigen::Index v = 0; v < p; ++v) {
    lam[v] = weibull_from_uniform(std::exp(log_ab_[2 * v]), std::exp(log_ab_[2 * v + 1]), noise.aux[v]);
  }
  return lam;
}

namespace {

struct BridgeForward {
  Vec lam;
  Mat sigma;
  Mat chol;
  Vec beta;
  Vec resid;
  double sd;
  double rate;
};

BridgeForward bridge_forward(const BridgeModel& m, const Vec& lam, double log_var, const StepNoise& noise) {
  const double kappa = m.penalty_scale();
  if ((lam.array() <= 0.0).any() || !lam.allFinite()) {
    throw NumericError("bridge step: non-positive local scale");
  }
  BridgeForward f;
  f.lam = lam;
  Mat a = m.xtx();
  a.diagonal() += kappa * lam;
  f.sigma = spd_inverse(a);
  f.sigma = 0.5 * (f.sigma + f.sigma.transpose());
  f.chol = cholesky(f.sigma);
  f.sd = std::exp(0.5 * log_var);
  f.beta = f.sigma * m.xty() + f.sd * (f.chol * noise.normal);
  f.resid = m.y() - m.x() * f.beta;
  f.rate = m.gamma_rate() + 0.5 * f.resid.squaredNorm() +
           0.5 * kappa * (lam.array() * f.beta.array().square()).sum();
  return f;
}

}  // namespace

Vec BridgeKernel::step(const Vec& z, const StepNoise& noise) const {
  const Eigen::Index p = model_->num_coef();
  if (z.size() != p + 1) throw std::invalid_argument("BridgeKernel::step: wrong state size");
  const BridgeForward f = bridge_forward(*model_, lambda(noise), z[p], noise);
  Vec out(p + 1);
  out.head(p) = f.beta;
  out[p] = std::log(f.rate) - std::log(noise.aux[p]);
  return out;
}

Mat BridgeKernel::step_jacobian(const Vec& z, const StepNoise& noise) const {
  const Eigen::Index p = model_->num_coef();
  const double kappa = model_->penalty_scale();
  const BridgeForward f = bridge_forward(*model_, lambda(noise), z[p], noise);
  const Vec l_xi = f.chol * noise.normal;
  const Vec xt_resid = model_->x().transpose() * f.resid;

  Mat jac(p + 1, 2 * p + 1);
  auto finish = [&](Eigen::Index col, const Vec& dbeta, const Vec& dlam) {
    const double drate = -xt_resid.dot(dbeta) +
                         0.5 * kappa * (dlam.array() * f.beta.array().square()).sum() +
                         kappa * (f.lam.array() * f.beta.array() * dbeta.array()).sum();
    jac.col(col).head(p) = dbeta;
    jac(p, col) = drate / f.rate;
  };

  for (Eigen::Index v = 0; v < p; ++v) {
    const double log_neg_log_u = std::log(-std::log(noise.aux[v]));
    const double b = std::exp(log_ab_[2 * v + 1]);
    const double dlam_da = f.lam[v];
    const double dlam_db = -f.lam[v] * log_neg_log_u / b;
    for (int which = 0; which < 2; ++which) {
      const double dl = which == 0 ? dlam_da : dlam_db;
      // dA = κ dλ_v e_v e_vᵀ, dΣ = -Σ dA Σ.
      const Mat dsigma = -kappa * dl * f.sigma.col(v) * f.sigma.row(v);
      const Mat dchol = cholesky_tangent(f.chol, dsigma);
      const Vec dbeta = dsigma * model_->xty() + f.sd * (dchol * noise.normal);
      Vec dlam = Vec::Zero(p);
      dlam[v] = dl;
      finish(2 * v + which, dbeta, dlam);
    }
  }
  // Input log σ² only scales the noise term.
  finish(2 * p, 0.5 * f.sd * l_xi, Vec::Zero(p));
  return jac;
}

Vec BridgeKernel::backward(const Vec& z, const StepNoise& noise, const Vec& out_bar,
                           Vec* eta_bar) const {
  const Eigen::Index p = model_->num_coef();
  const Mat jac = step_jacobian(z, noise);
  const Vec g = jac.transpose() * out_bar;
  if (eta_bar) *eta_bar += g.head(2 * p);
  Vec z_bar = Vec::Zero(p + 1);
  z_bar[p] = g[2 * p];
  return z_bar;
}

Vec bridge_initial_params(const BridgeModel& model) {
  const Eigen::Index p = model.num_coef();
  const Vec beta = ols(model.x(), model.y());
  const double dof = std::max<double>(1.0, static_cast<double>(model.num_data()) - p);
  const double sigma = std::sqrt((model.y() - model.x() * beta).squaredNorm() / dof);
  const double alpha = model.alpha();
  const double rho = model.rho();
  Vec eta(2 * p);
  for (Eigen::Index v = 0; v < p; ++v) {
    const double ratio = std::max(std::abs(beta[v] / sigma), 1e-8);
    double a = alpha * std::pow(rho, 1.0 - 2.0 / alpha) * std::pow(ratio, alpha - 2.0);
    a = std::clamp(a, 1e-3, 1e3);
    eta[2 * v] = std::log(a);
    eta[2 * v + 1] = 0.0;
  }
  return eta;
}

// ---------------------------------------------------------------------------

SampleTable extrapolate(const Kernel& kernel, const Vec& init, int steps, int burn_in,
                        RngStream& rng, std::vector<std::string> names) {
  if (burn_in < 0 || steps <= burn_in) {
    throw std::invalid_argument("extrapolate: need steps > burn_in >= 0");
  }
  if (names.empty()) {
    for (Eigen::Index i = 0; i < kernel.dim(); ++i) names.push_back("z" + std::to_string(i + 1));
  }
  SampleTable table;
  table.names = std::move(names);
  table.rows.resize(steps - burn_in, kernel.dim());
  Vec z = init;
  for (int s = 0; s < steps; ++s) {
    try {
      z = kernel.sample(z, rng);
      ensure_finite(z, "state");
    } catch (const std::exception& e) {
      throw NumericError("extrapolate: kernel failed at step " + std::to_string(s + 1) + ": " + e.what());
    }
    if (s >= burn_in) table.rows.row(s - burn_in) = z.transpose();
  }
  return table;
}

}  // namespace mivi
