#pragma once

#include "mivi/adam.hpp"
#include "mivi/discriminator.hpp"
#include "mivi/models.hpp"
#include "mivi/transitions.hpp"
#include "mivi/variational.hpp"

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

namespace mivi {

struct TrainerConfig {
  int particles = 200;       // J
  int steps = 5;             // T
  int warmup = 100;          // M: epochs before the discriminator enters
  int epochs = 1000;
  AdamConfig adam;
  bool stop_gradient = true;  // treat chain states as constants in the φ update
  bool learn_eta = true;
  bool learn_theta = true;
  std::vector<int> disc_hidden{64, 64};
  int checkpoint_every = 0;   // 0 keeps only the final snapshot
  int divergence_window = 50;
  double divergence_factor = 10.0;
  int threads = 1;
  std::uint64_t seed = 1;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int epoch, const std::string& what);
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

struct EpochStats {
  int epoch = 0;
  double elbo = 0.0;     // mean of log p - log q - D over chain states t = 1..T
  double elbo_se = 0.0;
  double cross_entropy = 0.0;
  double d_loss = 0.0;   // discriminator objective seen by its update (0 during warm-up)
  double d_mean_qtilde = 0.0;
  double d_mean_q = 0.0;
  double mean_log_eta = 0.0;
};

struct Snapshot {
  int epoch = 0;
  Vec phi;  // [mean; log_var]
  Vec eta;
  Vec disc;
  Vec theta;
};

struct TrainLog {
  std::vector<EpochStats> rows;
  std::vector<Snapshot> snapshots;
};

/// A q_φ draw pushed through the chain.
struct Particle {
  QSample q;
  Chain chain;
};

/// Draws one particle per stream id from `first_stream`, run in parallel with
/// one RngStream per particle so results do not depend on the thread count.
std::vector<Particle> simulate_particles(const Kernel& kernel, const VariationalParams& phi,
                                         int count, int steps, std::uint64_t seed,
                                         std::uint64_t first_stream, int threads);

struct SurrogateEstimate {
  double value = 0.0;
  double se = 0.0;
  Vec eta_grad;    // ascent direction
  Vec theta_grad;
};

/// Monte-Carlo ELBO surrogate (1/JT) Σ_{j,t≥1} [log p(z) - log q_φ(z) - D(z)] and
/// its pathwise gradient w.r.t. η. disc may be null (D ≡ 0).
SurrogateEstimate elbo_surrogate(const TargetModel& model, const Kernel& kernel,
                                 const VariationalParams& phi, const Discriminator* disc,
                                 const std::vector<Particle>& particles, bool want_grad,
                                 int threads = 1);

/// Gradient of -(1/JT) Σ log q_φ(z_jt) w.r.t. φ, flat [mean; log_var]. With
/// stop_gradient off the dependence of z_jt on φ through z_0 is included.
Vec phi_gradient(const Kernel& kernel, const VariationalParams& phi,
                 const std::vector<Particle>& particles, bool stop_gradient);

/// The three-player loop: per epoch update φ, then (θ, η), then D.
class Trainer {
 public:
  Trainer(TargetModel& model, Kernel& kernel, TrainerConfig config, VariationalParams phi0);

  EpochStats run_epoch();
  /// Runs all remaining epochs. Throws DivergenceError.
  const TrainLog& train();

  int epoch() const { return epoch_; }
  const VariationalParams& phi() const { return phi_; }
  const Discriminator& discriminator() const { return disc_; }
  const Kernel& kernel() const { return *kernel_; }
  const TrainLog& log() const { return log_; }
  const TrainerConfig& config() const { return config_; }

  /// Fresh draws from q_φ (first) and the chain's final state (second).
  std::pair<Mat, Mat> sample(int count, std::uint64_t stream) const;

 private:
  Snapshot snapshot() const;
  void check_divergence(const EpochStats& s);

  TargetModel* model_;
  Kernel* kernel_;
  TrainerConfig config_;
  VariationalParams phi_;
  Discriminator disc_;
  AdamState phi_state_;
  AdamState eta_state_;
  AdamState theta_state_;
  AdamState disc_state_;
  int epoch_ = 0;
  TrainLog log_;
  double initial_elbo_ = 0.0;
  double initial_spread_ = 0.0;
  int below_count_ = 0;
};

/// Mean-field VI by reparameterized ELBO ascent with Adam (no chain).
VariationalParams fit_mfvi(const TargetModel& model, VariationalParams phi0, int epochs, int samples,
                           const AdamConfig& adam, std::uint64_t seed);

/// Runs fn(i) for i in [0, n) on up to `threads` threads.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

}  // namespace mivi
