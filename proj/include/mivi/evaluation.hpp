#pragma once

#include "mivi/models.hpp"
#include "mivi/random.hpp"
#include "mivi/tensor.hpp"
#include "mivi/transitions.hpp"
#include "mivi/variational.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace mivi {

// ---------------------------------------------------------------------------
// Mixture estimate q̂ of the SGLD chain marginal after T steps.

/// Component means μ(z) = z + (η/2)∇log p(z) from K independent paths run to
/// step T-1, plus the shared diagonal variance η.
struct MixtureComponents {
  std::vector<Vec> means;
  Vec variance;
};

/// Mean of the final SGLD transition from state z.
Vec sgld_drift_mean(const SgldKernel& kernel, const Vec& z);

MixtureComponents sgld_mixture_components(const SgldKernel& kernel, const VariationalParams& phi,
                                          int steps, int k, RngStream& rng);

/// log q̂(z). With own_mean set, the evaluated path's own component is added
/// and the mixture has K+1 equally weighted components.
double mixture_log_density(const MixtureComponents& mix, const Vec& z,
                           const std::optional<Vec>& own_mean = std::nullopt);

/// q̂(z_query) with fresh components drawn from rng (no own component).
double sgld_mixture_density(const SgldKernel& kernel, const VariationalParams& phi, int steps,
                            int k, RngStream& rng, const Vec& z_query);

/// Full-path draws from the chain with their own-component means.
struct PathSample {
  Vec z;
  Vec own_mean;
};
std::vector<PathSample> sgld_path_samples(const SgldKernel& kernel, const VariationalParams& phi,
                                          int steps, int count, RngStream& rng);

struct ImportanceEstimate {
  double value = 0.0;       // log (1/J) Σ w_j
  Vec log_weights;
};

/// log p(x) ≈ log (1/J) Σ p(x, z_j) / q̂(z_j) with z_j full-path samples and
/// K fresh components per z_j.
ImportanceEstimate marginal_loglik_is(const TargetModel& model, const SgldKernel& kernel,
                                      const VariationalParams& phi, int steps, int samples, int k,
                                      RngStream& rng);

/// Paired per-sample log p - log q̂ and log p - log q_φ under q̃ draws.
struct BoundCheck {
  double lhs = 0.0;  // mean of log p - log q̂
  double rhs = 0.0;  // mean of log p - log q_φ
  double se = 0.0;   // standard error of the paired difference
};
BoundCheck elbo_bound_check(const TargetModel& model, const SgldKernel& kernel,
                            const VariationalParams& phi, int steps, int samples, int k,
                            RngStream& rng);

/// log-sum-exp mean of a vector.
double log_mean_exp(const Vec& v);

// ---------------------------------------------------------------------------
// Grid quadrature.

struct GridAxis {
  double lo;
  double hi;
  int cells;
};

/// KL(a‖b) by midpoint Riemann sums over the grid. Inputs are normalized log
/// densities; each must put mass ≥ 1 - 1e-3 on the grid. Both are renormalized
/// on the grid before the sum.
double grid_kl(const std::function<double(const Vec&)>& log_a,
               const std::function<double(const Vec&)>& log_b, const std::vector<GridAxis>& grid);

/// Mass of a normalized density on the grid.
double grid_mass(const std::function<double(const Vec&)>& log_density, const std::vector<GridAxis>& grid);

/// KL between univariate normals.
double gaussian_kl_1d(double mean_a, double var_a, double mean_b, double var_b);

struct Ar1Marginal {
  double mean;
  double var;
};
/// Marginals of z' = c z + s ξ started from N(m0, v0), for t = 0..steps.
std::vector<Ar1Marginal> ar1_marginals(double c, double s, double m0, double v0, int steps);

// ---------------------------------------------------------------------------
// Baselines.

/// PG-augmented Gibbs sampler for logistic regression with N(0, I) prior.
SampleTable gibbs_logistic_baseline(const LogisticModel& model, int iters, int burn_in, RngStream& rng);

struct LassoResult {
  Vec beta;
  double duality_gap = 0.0;
  int sweeps = 0;
};
/// Coordinate descent for ½‖y - Xβ‖² + ψ‖β‖₁.
LassoResult lasso_cd(const Mat& x, const Vec& y, double psi, double tol = 1e-13, int max_sweeps = 100000);
/// Largest violation of the lasso optimality conditions.
double lasso_kkt_residual(const Mat& x, const Vec& y, double psi, const Vec& beta);

/// Proximal gradient for ½‖y - Xβ‖² + ψ Σ|β_v|^α with 1 ≤ α ≤ 2.
Vec bridge_prox_solve(const Mat& x, const Vec& y, double alpha, double psi, double tol = 1e-12,
                      int max_iter = 200000);

/// ψ such that the penalized solution's L1 norm equals target (bisection).
/// alpha = 1 uses lasso_cd, other α the proximal solver.
double match_l1_penalty(const Mat& x, const Vec& y, double alpha, double target_l1, double rel_tol = 1e-4);

// ---------------------------------------------------------------------------
// Summaries.

struct PosteriorSummary {
  std::vector<std::string> names;
  Vec mean;
  Vec sd;
  Vec q025;
  Vec q975;
  Mat corr;
};

/// Type-7 empirical quantile of an unsorted vector.
double quantile(Vec v, double prob);

PosteriorSummary summarize(const SampleTable& samples);

/// Mahalanobis distance of mean_a from mean_b under cov_b, plus the Frobenius
/// norm of cov_a whitened by cov_b minus the identity.
double moment_distance(const Vec& mean_a, const Mat& cov_a, const Vec& mean_b, const Mat& cov_b);

Vec column_mean(const Mat& rows);
Mat column_cov(const Mat& rows);

/// Length of the intersection divided by the length of the longer interval.
double interval_overlap(double lo_a, double hi_a, double lo_b, double hi_b);

}  // namespace mivi
