#include "mivi/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

namespace mivi {

void TrainerConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) {
    throw std::invalid_argument(key + ": " + why);
  };
  if (particles < 1) fail("trainer.J", "must be at least 1");
  if (steps < 1) fail("trainer.T", "must be at least 1");
  if (warmup < 0) fail("trainer.M", "must be non-negative");
  if (epochs < 0) fail("trainer.epochs", "must be non-negative");
  if (!(adam.lr > 0.0)) fail("trainer.lr", "must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) fail("trainer.beta1", "must lie in [0, 1)");
  if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) fail("trainer.beta2", "must lie in [0, 1)");
  if (!(adam.eps > 0.0)) fail("trainer.eps", "must be positive");
  if (threads < 1) fail("threads", "must be at least 1");
  if (divergence_window < 1) fail("trainer.divergence_window", "must be at least 1");
  for (int h : disc_hidden) {
    if (h < 1) fail("trainer.disc_hidden", "layer sizes must be positive");
  }
}

DivergenceError::DivergenceError(int epoch, const std::string& what)
    : std::runtime_error(what), epoch_(epoch) {}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      for (int i = w; i < n; i += threads) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::vector<Particle> simulate_particles(const Kernel& kernel, const VariationalParams& phi,
                                         int count, int steps, std::uint64_t seed,
                                         std::uint64_t first_stream, int threads) {
  std::vector<Particle> out(count);
  parallel_for(count, threads, [&](int j) {
    RngStream rng(seed, first_stream + static_cast<std::uint64_t>(j));
    out[j].q = q_sample(phi, rng);
    out[j].chain = run_chain(kernel, out[j].q.z, steps, rng);
  });
  return out;
}

SurrogateEstimate elbo_surrogate(const TargetModel& model, const Kernel& kernel,
                                 const VariationalParams& phi, const Discriminator* disc,
                                 const std::vector<Particle>& particles, bool want_grad,
                                 int threads) {
  if (particles.empty()) throw std::invalid_argument("elbo_surrogate: no particles");
  const int n = static_cast<int>(particles.size());
  const int steps = static_cast<int>(particles.front().chain.length());
  const double scale = 1.0 / (static_cast<double>(n) * steps);

  // D and its input gradient for every chain state at once.
  Vec d_values;
  Mat d_grads;
  if (disc) {
    Mat states(model.dim(), static_cast<Eigen::Index>(n) * steps);
    for (int j = 0; j < n; ++j) {
      for (int t = 1; t <= steps; ++t) states.col(static_cast<Eigen::Index>(j) * steps + t - 1) = particles[j].chain.z[t];
    }
    if (want_grad) {
      d_grads = disc->input_grad_batch(states, &d_values);
    } else {
      d_values = disc->forward_batch(states);
    }
  }

  struct PerParticle {
    std::vector<double> terms;
    Vec eta_grad;
    Vec theta_grad;
  };
  std::vector<PerParticle> per(n);
  parallel_for(n, threads, [&](int j) {
    const Chain& chain = particles[j].chain;
    PerParticle& pp = per[j];
    pp.eta_grad = Vec::Zero(kernel.params().size());
    pp.theta_grad = Vec::Zero(model.num_theta());
    std::vector<Vec> z_bar(steps + 1, Vec::Zero(model.dim()));
    for (int t = 1; t <= steps; ++t) {
      const Vec& z = chain.z[t];
      const Eigen::Index col = static_cast<Eigen::Index>(j) * steps + t - 1;
      const QLogPdf lq = q_logpdf(phi, z);
      const double d = disc ? d_values[col] : 0.0;
      const double term = model.log_joint(z) - lq.value - d;
      if (!std::isfinite(term)) {
        throw NumericError("elbo_surrogate: non-finite term at particle " + std::to_string(j) +
                           ", step " + std::to_string(t));
      }
      pp.terms.push_back(term);
      if (want_grad) {
        Vec g = model.grad_z(z) - lq.d_z;
        if (disc) g -= d_grads.col(col);
        z_bar[t] = scale * g;
        if (model.num_theta() > 0) pp.theta_grad += scale * model.grad_theta(z);
      }
    }
    if (want_grad) backprop_chain(kernel, chain, z_bar, &pp.eta_grad);
  });

  SurrogateEstimate out;
  out.eta_grad = Vec::Zero(kernel.params().size());
  out.theta_grad = Vec::Zero(model.num_theta());
  // Per-particle averages are independent, so their spread gives the SE.
  Vec particle_mean(n);
  for (int j = 0; j < n; ++j) {
    double s = 0.0;
    for (double v : per[j].terms) s += v;
    particle_mean[j] = s / steps;
    out.value += s * scale;
    out.eta_grad += per[j].eta_grad;
    out.theta_grad += per[j].theta_grad;
  }
  if (n > 1) {
    const double var = (particle_mean.array() - out.value).square().sum() / (n - 1);
    out.se = std::sqrt(var / n);
  }
  return out;
}

Vec phi_gradient(const Kernel& kernel, const VariationalParams& phi,
                 const std::vector<Particle>& particles, bool stop_gradient) {
  std::vector<Vec> samples;
  for (const auto& p : particles) {
    for (std::size_t t = 1; t < p.chain.z.size(); ++t) samples.push_back(p.chain.z[t]);
  }
  Vec grad = cross_entropy_grad(phi, samples);
  if (stop_gradient) return grad;

  const Eigen::Index d = phi.dim();
  const double scale = 1.0 / static_cast<double>(samples.size());
  const Vec sd = phi.sd();
  for (const auto& p : particles) {
    std::vector<Vec> z_bar(p.chain.z.size(), Vec::Zero(d));
    for (std::size_t t = 1; t < p.chain.z.size(); ++t) {
      z_bar[t] = -scale * q_logpdf(phi, p.chain.z[t]).d_z;
    }
    const Vec c = backprop_chain(kernel, p.chain, z_bar, nullptr);
    grad.head(d) += c;
    grad.tail(d) += (0.5 * c.array() * sd.array() * p.q.eps.array()).matrix();
  }
  return grad;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::uint64_t kDiscInitStream = 0xD15CULL;

std::uint64_t epoch_stream(int epoch) { return (static_cast<std::uint64_t>(epoch) + 1) << 32; }

}  // namespace

Trainer::Trainer(TargetModel& model, Kernel& kernel, TrainerConfig config, VariationalParams phi0)
    : model_(&model), kernel_(&kernel), config_(std::move(config)), phi_(std::move(phi0)) {
  config_.validate();
  if (phi_.dim() != model.dim() || kernel.dim() != model.dim()) {
    throw std::invalid_argument("Trainer: model, kernel and q_phi dimensions differ");
  }
  RngStream init(config_.seed, kDiscInitStream);
  disc_ = Discriminator(model.dim(), config_.disc_hidden, init);
  phi_state_ = AdamState(2 * phi_.dim());
  eta_state_ = AdamState(kernel.params().size());
  theta_state_ = AdamState(model.num_theta());
  disc_state_ = AdamState(disc_.params().size());
}

Snapshot Trainer::snapshot() const {
  return Snapshot{epoch_, phi_.flat(), kernel_->params(), disc_.params(), model_->theta()};
}

EpochStats Trainer::run_epoch() {
  const int e = epoch_;
  const bool adversarial = e >= config_.warmup;
  std::vector<Particle> particles =
      simulate_particles(*kernel_, phi_, config_.particles, config_.steps, config_.seed,
                         epoch_stream(e), config_.threads);

  EpochStats stats;
  stats.epoch = e;

  // φ: cross-entropy against the chain states.
  {
    std::vector<Vec> samples;
    for (const auto& p : particles) {
      for (std::size_t t = 1; t < p.chain.z.size(); ++t) samples.push_back(p.chain.z[t]);
    }
    stats.cross_entropy = cross_entropy(phi_, samples);
    Vec flat = phi_.flat();
    adam_update(flat, phi_gradient(*kernel_, phi_, particles, config_.stop_gradient), phi_state_,
                config_.adam);
    phi_ = VariationalParams::from_flat(flat);
  }

  // (θ, η): ascend the surrogate, with -D only after warm-up.
  const SurrogateEstimate est =
      elbo_surrogate(*model_, *kernel_, phi_, adversarial ? &disc_ : nullptr, particles,
                     config_.learn_eta || (config_.learn_theta && model_->num_theta() > 0),
                     config_.threads);
  stats.elbo = est.value;
  stats.elbo_se = est.se;
  if (config_.learn_eta && est.eta_grad.size() > 0) {
    Vec eta = kernel_->params();
    adam_update(eta, -est.eta_grad, eta_state_, config_.adam);
    kernel_->set_params(eta);
  }
  if (config_.learn_theta && model_->num_theta() > 0) {
    Vec theta = model_->theta();
    adam_update(theta, -est.theta_grad, theta_state_, config_.adam);
    model_->set_theta(theta);
  }

  // D: J·T positives from the chain, J negatives from q_φ. The logged loss
  // and means are those seen by this update. D stays at its zero-logit
  // initialization during warm-up.
  if (adversarial) {
    std::vector<Vec> pos;
    std::vector<Vec> neg;
    for (const auto& p : particles) {
      neg.push_back(p.chain.z.front());
      for (std::size_t t = 1; t < p.chain.z.size(); ++t) pos.push_back(p.chain.z[t]);
    }
    const Discriminator::LossGrad lg = disc_.loss_grad(columns(pos), columns(neg));
    Vec params = disc_.params();
    adam_update(params, -lg.grad, disc_state_, config_.adam);
    disc_.set_params(params);
    stats.d_loss = lg.loss;
    stats.d_mean_qtilde = lg.mean_pos;
    stats.d_mean_q = lg.mean_neg;
  }
  if (kernel_->name() == "sgld") stats.mean_log_eta = kernel_->params().mean();

  log_.rows.push_back(stats);
  ++epoch_;
  if (config_.checkpoint_every > 0 && epoch_ % config_.checkpoint_every == 0) {
    log_.snapshots.push_back(snapshot());
  }
  check_divergence(stats);
  return stats;
}

void Trainer::check_divergence(const EpochStats& s) {
  if (!std::isfinite(s.elbo)) throw DivergenceError(s.epoch, "surrogate became non-finite");
  if (s.epoch == 0) {
    initial_elbo_ = s.elbo;
    initial_spread_ = s.elbo_se * std::sqrt(static_cast<double>(config_.particles));
    return;
  }
  if (s.elbo < initial_elbo_ - config_.divergence_factor * initial_spread_) {
    if (++below_count_ >= config_.divergence_window) {
      throw DivergenceError(s.epoch, "surrogate stayed below its initial value for " +
                                         std::to_string(below_count_) + " epochs");
    }
  } else {
    below_count_ = 0;
  }
}

const TrainLog& Trainer::train() {
  while (epoch_ < config_.epochs) {
    try {
      run_epoch();
    } catch (const NumericError& e) {
      throw DivergenceError(epoch_, e.what());
    }
  }
  if (log_.snapshots.empty() || log_.snapshots.back().epoch != epoch_) log_.snapshots.push_back(snapshot());
  return log_;
}

std::pair<Mat, Mat> Trainer::sample(int count, std::uint64_t stream) const {
  const auto particles =
      simulate_particles(*kernel_, phi_, count, config_.steps, config_.seed, stream, config_.threads);
  Mat q(count, model_->dim());
  Mat qt(count, model_->dim());
  for (int j = 0; j < count; ++j) {
    q.row(j) = particles[j].chain.z.front().transpose();
    qt.row(j) = particles[j].chain.z.back().transpose();
  }
  return {q, qt};
}

VariationalParams fit_mfvi(const TargetModel& model, VariationalParams phi, int epochs, int samples,
                           const AdamConfig& adam, std::uint64_t seed) {
  if (samples < 1) throw std::invalid_argument("fit_mfvi: need at least one sample");
  const Eigen::Index d = phi.dim();
  AdamState state(2 * d);
  for (int e = 0; e < epochs; ++e) {
    RngStream rng(seed, epoch_stream(e));
    const Vec sd = phi.sd();
    Vec grad = Vec::Zero(2 * d);
    for (int s = 0; s < samples; ++s) {
      const QSample q = q_sample(phi, rng);
      const Vec g = model.grad_z(q.z);
      grad.head(d) += g;
      grad.tail(d) += (0.5 * g.array() * sd.array() * q.eps.array()).matrix();
    }
    grad /= samples;
    grad.tail(d).array() += 0.5;  // entropy term
    Vec flat = phi.flat();
    adam_update(flat, -grad, state, adam);
    phi = VariationalParams::from_flat(flat);
  }
  return phi;
}

}  // namespace mivi
