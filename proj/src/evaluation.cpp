#include "mivi/evaluation.hpp"

#include "mivi/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mivi {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

double diag_gaussian_logpdf(const Vec& z, const Vec& mean, const Vec& var) {
  return -0.5 * (kLog2Pi * z.size() + var.array().log().sum() +
                 ((z - mean).array().square() / var.array()).sum());
}

double log_sum_exp(const std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

double log_mean_exp(const Vec& v) {
  if (v.size() == 0) throw std::invalid_argument("log_mean_exp: empty input");
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) throw NumericError("log_mean_exp: all weights degenerate");
  return m + std::log((v.array() - m).exp().mean());
}

// ---------------------------------------------------------------------------

Vec sgld_drift_mean(const SgldKernel& kernel, const Vec& z) {
  const Vec eta = kernel.step_sizes();
  return z + (0.5 * eta.array() * kernel.model().grad_z(z).array()).matrix();
}

MixtureComponents sgld_mixture_components(const SgldKernel& kernel, const VariationalParams& phi,
                                          int steps, int k, RngStream& rng) {
  if (steps < 1 || k < 1) throw std::invalid_argument("sgld_mixture_components: need T >= 1 and K >= 1");
  MixtureComponents mix;
  mix.variance = kernel.step_sizes();
  for (int i = 0; i < k; ++i) {
    const Chain c = run_chain(kernel, q_sample(phi, rng).z, steps - 1, rng);
    mix.means.push_back(sgld_drift_mean(kernel, c.z.back()));
  }
  return mix;
}

double mixture_log_density(const MixtureComponents& mix, const Vec& z, const std::optional<Vec>& own_mean) {
  std::vector<double> terms;
  terms.reserve(mix.means.size() + 1);
  if (own_mean) terms.push_back(diag_gaussian_logpdf(z, *own_mean, mix.variance));
  for (const Vec& m : mix.means) terms.push_back(diag_gaussian_logpdf(z, m, mix.variance));
  return log_sum_exp(terms) - std::log(static_cast<double>(terms.size()));
}

double sgld_mixture_density(const SgldKernel& kernel, const VariationalParams& phi, int steps, int k,
                            RngStream& rng, const Vec& z_query) {
  return std::exp(mixture_log_density(sgld_mixture_components(kernel, phi, steps, k, rng), z_query));
}

std::vector<PathSample> sgld_path_samples(const SgldKernel& kernel, const VariationalParams& phi,
                                          int steps, int count, RngStream& rng) {
  std::vector<PathSample> out;
  out.reserve(count);
  for (int j = 0; j < count; ++j) {
    const Chain c = run_chain(kernel, q_sample(phi, rng).z, steps, rng);
    out.push_back({c.z.back(), sgld_drift_mean(kernel, c.z[steps - 1])});
  }
  return out;
}

ImportanceEstimate marginal_loglik_is(const TargetModel& model, const SgldKernel& kernel,
                                      const VariationalParams& phi, int steps, int samples, int k,
                                      RngStream& rng) {
  if (samples < 1) throw std::invalid_argument("marginal_loglik_is: need samples");
  const auto paths = sgld_path_samples(kernel, phi, steps, samples, rng);
  ImportanceEstimate out;
  out.log_weights.resize(samples);
  // Fresh components per point keep the weights independent.
  for (int j = 0; j < samples; ++j) {
    const MixtureComponents mix = sgld_mixture_components(kernel, phi, steps, k, rng);
    out.log_weights[j] = model.log_joint(paths[j].z) - mixture_log_density(mix, paths[j].z, paths[j].own_mean);
  }
  out.value = log_mean_exp(out.log_weights);
  return out;
}

BoundCheck elbo_bound_check(const TargetModel& model, const SgldKernel& kernel,
                            const VariationalParams& phi, int steps, int samples, int k, RngStream& rng) {
  if (samples < 2) throw std::invalid_argument("elbo_bound_check: need at least two samples");
  const auto paths = sgld_path_samples(kernel, phi, steps, samples, rng);
  Vec diff(samples);
  BoundCheck out;
  for (int j = 0; j < samples; ++j) {
    const MixtureComponents mix = sgld_mixture_components(kernel, phi, steps, k, rng);
    const double lp = model.log_joint(paths[j].z);
    const double lqhat = mixture_log_density(mix, paths[j].z, paths[j].own_mean);
    const double lq = q_logpdf_value(phi, paths[j].z);
    out.lhs += (lp - lqhat) / samples;
    out.rhs += (lp - lq) / samples;
    diff[j] = lq - lqhat;
  }
  const double m = diff.mean();
  out.se = std::sqrt((diff.array() - m).square().sum() / (samples - 1) / samples);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

template <typename Fn>
void for_each_cell(const std::vector<GridAxis>& grid, Fn&& fn) {
  if (grid.empty() || grid.size() > 2) throw std::invalid_argument("grid: only 1-D and 2-D grids");
  for (const auto& a : grid) {
    if (a.cells < 1 || !(a.hi > a.lo)) throw std::invalid_argument("grid: invalid axis");
  }
  Vec z(static_cast<Eigen::Index>(grid.size()));
  const double h0 = (grid[0].hi - grid[0].lo) / grid[0].cells;
  if (grid.size() == 1) {
    for (int i = 0; i < grid[0].cells; ++i) {
      z[0] = grid[0].lo + (i + 0.5) * h0;
      fn(z, h0);
    }
    return;
  }
  const double h1 = (grid[1].hi - grid[1].lo) / grid[1].cells;
  for (int i = 0; i < grid[0].cells; ++i) {
    z[0] = grid[0].lo + (i + 0.5) * h0;
    for (int j = 0; j < grid[1].cells; ++j) {
      z[1] = grid[1].lo + (j + 0.5) * h1;
      fn(z, h0 * h1);
    }
  }
}

}  // namespace

double grid_mass(const std::function<double(const Vec&)>& log_density, const std::vector<GridAxis>& grid) {
  double mass = 0.0;
  for_each_cell(grid, [&](const Vec& z, double area) { mass += std::exp(log_density(z)) * area; });
  return mass;
}

double grid_kl(const std::function<double(const Vec&)>& log_a,
               const std::function<double(const Vec&)>& log_b, const std::vector<GridAxis>& grid) {
  double mass_a = 0.0;
  double mass_b = 0.0;
  double cross = 0.0;  // Σ a (log a - log b) area
  for_each_cell(grid, [&](const Vec& z, double area) {
    const double la = log_a(z);
    const double lb = log_b(z);
    const double a = std::exp(la);
    mass_a += a * area;
    mass_b += std::exp(lb) * area;
    if (a > 0.0) cross += a * (la - lb) * area;
  });
  if (mass_a < 1.0 - 1e-3 || mass_b < 1.0 - 1e-3) {
    throw std::invalid_argument("grid_kl: insufficient grid mass (" + std::to_string(mass_a) + ", " +
                                std::to_string(mass_b) + ")");
  }
  // With a/mass_a and b/mass_b: KL = cross/mass_a - log mass_a + log mass_b.
  return cross / mass_a - std::log(mass_a) + std::log(mass_b);
}

double gaussian_kl_1d(double mean_a, double var_a, double mean_b, double var_b) {
  return 0.5 * (std::log(var_b / var_a) + (var_a + (mean_a - mean_b) * (mean_a - mean_b)) / var_b - 1.0);
}

std::vector<Ar1Marginal> ar1_marginals(double c, double s, double m0, double v0, int steps) {
  std::vector<Ar1Marginal> out{{m0, v0}};
  for (int t = 0; t < steps; ++t) {
    const auto& prev = out.back();
    out.push_back({c * prev.mean, c * c * prev.var + s * s});
  }
  return out;
}

// ---------------------------------------------------------------------------

SampleTable gibbs_logistic_baseline(const LogisticModel& model, int iters, int burn_in, RngStream& rng) {
  if (burn_in < 0 || iters <= burn_in) throw std::invalid_argument("gibbs_logistic_baseline: need iters > burn_in >= 0");
  const Mat& x = model.x();
  const Vec kappa = model.kappa();
  const Eigen::Index p = model.dim();
  SampleTable table;
  table.names = model.variable_names();
  table.rows.resize(iters - burn_in, p);
  Vec beta = Vec::Zero(p);
  Vec omega(x.rows());
  for (int it = 0; it < iters; ++it) {
    const Vec s = x * beta;
    for (Eigen::Index i = 0; i < x.rows(); ++i) omega[i] = rng.polya_gamma(s[i]);
    beta = logistic_beta_conditional(x, kappa, omega, rng.normal_vec(p)).beta;
    if (it >= burn_in) table.rows.row(it - burn_in) = beta.transpose();
  }
  return table;
}

namespace {

double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

double lasso_gap(const Mat& x, const Vec& y, double psi, const Vec& beta) {
  const Vec r = y - x * beta;
  const double primal = 0.5 * r.squaredNorm() + psi * beta.lpNorm<1>();
  const double corr = (x.transpose() * r).lpNorm<Eigen::Infinity>();
  const double scale = corr > psi ? psi / corr : 1.0;
  const Vec theta = scale * r;
  const double dual = 0.5 * y.squaredNorm() - 0.5 * (y - theta).squaredNorm();
  return primal - dual;
}

}  // namespace

LassoResult lasso_cd(const Mat& x, const Vec& y, double psi, double tol, int max_sweeps) {
  if (psi < 0.0) throw std::invalid_argument("lasso_cd: penalty must be non-negative");
  if (x.rows() != y.size()) throw std::invalid_argument("lasso_cd: dimension mismatch");
  LassoResult out;
  if (psi == 0.0) {
    out.beta = ols(x, y);
    return out;
  }
  const Eigen::Index p = x.cols();
  const Vec norms = x.colwise().squaredNorm().transpose();
  out.beta = Vec::Zero(p);
  Vec r = y;
  // The gap is measured relative to the scale of the objective.
  const double target = tol * std::max(1.0, 0.5 * y.squaredNorm());
  for (out.sweeps = 1; out.sweeps <= max_sweeps; ++out.sweeps) {
    for (Eigen::Index j = 0; j < p; ++j) {
      if (norms[j] == 0.0) continue;
      const double old = out.beta[j];
      const double next = soft_threshold(x.col(j).dot(r) + norms[j] * old, psi) / norms[j];
      if (next != old) {
        r -= (next - old) * x.col(j);
        out.beta[j] = next;
      }
    }
    if (out.sweeps % 10 == 0 || out.sweeps == 1) {
      out.duality_gap = lasso_gap(x, y, psi, out.beta);
      if (out.duality_gap <= target) return out;
    }
  }
  throw NumericError("lasso_cd: no convergence after " + std::to_string(max_sweeps) + " sweeps");
}

double lasso_kkt_residual(const Mat& x, const Vec& y, double psi, const Vec& beta) {
  const Vec g = x.transpose() * (y - x * beta);
  double worst = 0.0;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    const double v = beta[j] != 0.0 ? std::abs(g[j] - psi * (beta[j] > 0 ? 1.0 : -1.0))
                                    : std::max(0.0, std::abs(g[j]) - psi);
    worst = std::max(worst, v);
  }
  return worst;
}

namespace {

// argmin_x ½(x - v)² + t|x|^α for α in [1, 2].
double prox_power(double v, double t, double alpha) {
  const double a = std::abs(v);
  const double sign = v < 0 ? -1.0 : 1.0;
  if (alpha == 1.0) return soft_threshold(v, t);
  if (alpha == 1.5) {
    const double c = 1.5 * t;
    const double s = 0.5 * (-c + std::sqrt(c * c + 4.0 * a));
    return sign * s * s;
  }
  if (alpha == 2.0) return v / (1.0 + 2.0 * t);
  double lo = 0.0;
  double hi = a;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid + t * alpha * std::pow(mid, alpha - 1.0) > a) hi = mid; else lo = mid;
  }
  return sign * 0.5 * (lo + hi);
}

}  // namespace

Vec bridge_prox_solve(const Mat& x, const Vec& y, double alpha, double psi, double tol, int max_iter) {
  if (!(alpha >= 1.0 && alpha <= 2.0)) throw std::invalid_argument("bridge_prox_solve: alpha must lie in [1, 2]");
  if (psi < 0.0) throw std::invalid_argument("bridge_prox_solve: penalty must be non-negative");
  const Mat xtx = x.transpose() * x;
  const Vec xty = x.transpose() * y;
  const double lipschitz = Eigen::SelfAdjointEigenSolver<Mat>(xtx).eigenvalues().maxCoeff();
  const double step = 1.0 / lipschitz;
  Vec beta = Vec::Zero(x.cols());
  for (int it = 0; it < max_iter; ++it) {
    const Vec v = beta - step * (xtx * beta - xty);
    Vec next(beta.size());
    for (Eigen::Index j = 0; j < beta.size(); ++j) next[j] = prox_power(v[j], step * psi, alpha);
    const double change = (next - beta).lpNorm<Eigen::Infinity>();
    beta = next;
    if (change <= tol * (1.0 + beta.lpNorm<Eigen::Infinity>())) return beta;
  }
  throw NumericError("bridge_prox_solve: no convergence");
}

double match_l1_penalty(const Mat& x, const Vec& y, double alpha, double target_l1, double rel_tol) {
  auto l1_at = [&](double psi) {
    return alpha == 1.0 ? lasso_cd(x, y, psi).beta.lpNorm<1>() : bridge_prox_solve(x, y, alpha, psi).lpNorm<1>();
  };
  const double full = l1_at(0.0);
  if (!(target_l1 > 0.0) || target_l1 >= full) return 0.0;
  double lo = 0.0;
  double hi = (x.transpose() * y).lpNorm<Eigen::Infinity>();
  while (l1_at(hi) > target_l1) hi *= 2.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double l1 = l1_at(mid);
    if (std::abs(l1 - target_l1) <= rel_tol * target_l1) return mid;
    if (l1 > target_l1) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------

double quantile(Vec v, double prob) {
  if (v.size() == 0) throw std::invalid_argument("quantile: empty input");
  std::sort(v.data(), v.data() + v.size());
  const double h = (v.size() - 1) * prob;
  const Eigen::Index lo = static_cast<Eigen::Index>(std::floor(h));
  const Eigen::Index hi = std::min<Eigen::Index>(lo + 1, v.size() - 1);
  return v[lo] + (h - lo) * (v[hi] - v[lo]);
}

Vec column_mean(const Mat& rows) { return rows.colwise().mean().transpose(); }

Mat column_cov(const Mat& rows) {
  if (rows.rows() < 2) throw std::invalid_argument("column_cov: need at least two rows");
  const Mat centered = rows.rowwise() - rows.colwise().mean();
  return centered.transpose() * centered / static_cast<double>(rows.rows() - 1);
}

PosteriorSummary summarize(const SampleTable& samples) {
  const Mat& x = samples.rows;
  if (x.rows() < 100) throw std::invalid_argument("summarize: need at least 100 rows");
  const Eigen::Index d = x.cols();
  PosteriorSummary s;
  s.names = samples.names;
  if (s.names.empty()) {
    for (Eigen::Index i = 0; i < d; ++i) s.names.push_back("z" + std::to_string(i + 1));
  }
  s.mean = column_mean(x);
  const Mat cov = column_cov(x);
  s.sd = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  s.q025.resize(d);
  s.q975.resize(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    s.q025[i] = quantile(x.col(i), 0.025);
    s.q975[i] = quantile(x.col(i), 0.975);
  }
  s.corr = Mat::Identity(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      if (i == j) continue;
      const double denom = s.sd[i] * s.sd[j];
      s.corr(i, j) = denom > 0.0 ? std::clamp(cov(i, j) / denom, -1.0, 1.0) : 0.0;
    }
  }
  return s;
}

double moment_distance(const Vec& mean_a, const Mat& cov_a, const Vec& mean_b, const Mat& cov_b) {
  const Mat l = cholesky(0.5 * (cov_b + cov_b.transpose()));
  const Vec dm = l.triangularView<Eigen::Lower>().solve(mean_a - mean_b);
  Mat w = l.triangularView<Eigen::Lower>().solve(cov_a);
  w = l.triangularView<Eigen::Lower>().solve(w.transpose()).transpose();
  return dm.norm() + (w - Mat::Identity(w.rows(), w.cols())).norm();
}

double interval_overlap(double lo_a, double hi_a, double lo_b, double hi_b) {
  const double inter = std::max(0.0, std::min(hi_a, hi_b) - std::max(lo_a, lo_b));
  const double longest = std::max(hi_a - lo_a, hi_b - lo_b);
  if (longest <= 0.0) return (lo_a == lo_b && hi_a == hi_b) ? 1.0 : 0.0;
  return inter / longest;
}

}  // namespace mivi
