#include "mivi/models.hpp"

#include "mivi/io.hpp"
#include "mivi/linalg.hpp"


#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mivi {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double lbeta(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

double sign(double x) { return (x > 0) - (x < 0); }

}  // namespace

// ---------------------------------------------------------------------------

std::vector<std::string> TargetModel::variable_names() const {
  std::vector<std::string> names;
  for (Eigen::Index i = 0; i < dim(); ++i) names.push_back("z" + std::to_string(i + 1));
  return names;
}

double TargetModel::likelihood_scale(const Batch& batch) const {
  if (batch.empty()) return 1.0;
  const std::size_t n = num_data();
  for (std::size_t i : batch) {
    if (i >= n) throw std::out_of_range("minibatch index " + std::to_string(i) + " out of range");
  }
  return static_cast<double>(n) / static_cast<double>(batch.size());
}

void TargetModel::check_dim(const Vec& z) const {
  if (z.size() != dim()) {
    throw std::invalid_argument("latent has dimension " + std::to_string(z.size()) + ", model expects " +
                                std::to_string(dim()));
  }
}

// ---------------------------------------------------------------------------

GaussianTarget::GaussianTarget(Vec mean, Mat cov) : mean_(std::move(mean)), cov_(std::move(cov)) {
  if (cov_.rows() != mean_.size() || cov_.cols() != mean_.size()) {
    throw std::invalid_argument("GaussianTarget: covariance shape does not match mean");
  }
  const Mat l = cholesky(cov_);
  precision_ = inverse_from_cholesky(l);
  log_norm_ = -0.5 * kLog2Pi * static_cast<double>(mean_.size()) -
              l.diagonal().array().log().sum();
}

double GaussianTarget::log_joint(const Vec& z, const Batch&) const {
  check_dim(z);
  const Vec d = z - mean_;
  return log_norm_ - 0.5 * d.dot(precision_ * d);
}

Vec GaussianTarget::grad_z(const Vec& z, const Batch&) const {
  check_dim(z);
  return -precision_ * (z - mean_);
}

Vec GaussianTarget::hvp(const Vec& z, const Vec& v, const Batch&) const {
  check_dim(z);
  check_dim(v);
  return -precision_ * v;
}

// ---------------------------------------------------------------------------

double BananaTarget::log_joint(const Vec& z, const Batch&) const {
  check_dim(z);
  const double r = z[0] - 0.25 * z[1] * z[1];
  // N(z1; z2²/4, 1) N(z2; 0, 4)
  return -0.5 * r * r - 0.5 * kLog2Pi - z[1] * z[1] / 8.0 - 0.5 * (kLog2Pi + std::log(4.0));
}

Vec BananaTarget::grad_z(const Vec& z, const Batch&) const {
  check_dim(z);
  const double r = z[0] - 0.25 * z[1] * z[1];
  Vec g(2);
  g << -r, 0.5 * r * z[1] - 0.25 * z[1];
  return g;
}

Vec BananaTarget::hvp(const Vec& z, const Vec& v, const Batch&) const {
  check_dim(z);
  check_dim(v);
  const double r = z[0] - 0.25 * z[1] * z[1];
  const double h11 = -1.0;
  const double h12 = 0.5 * z[1];
  const double h22 = -0.25 * z[1] * z[1] + 0.5 * r - 0.25;
  Vec out(2);
  out << h11 * v[0] + h12 * v[1], h12 * v[0] + h22 * v[1];
  return out;
}

// ---------------------------------------------------------------------------

GaussianMixtureTarget::GaussianMixtureTarget(std::vector<double> weights,
                                             std::vector<GaussianTarget> components)
    : components_(std::move(components)) {
  if (weights.size() != components_.size() || weights.empty()) {
    throw std::invalid_argument("GaussianMixtureTarget: weights and components differ in count");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w > 0.0)) throw std::invalid_argument("GaussianMixtureTarget: weights must be positive");
    total += w;
  }
  for (double w : weights) log_weights_.push_back(std::log(w / total));
}

Vec GaussianMixtureTarget::responsibilities(const Vec& z) const {
  Vec lw(components_.size());
  for (std::size_t k = 0; k < components_.size(); ++k) {
    lw[k] = log_weights_[k] + components_[k].log_joint(z);
  }
  const double m = lw.maxCoeff();
  Vec w = (lw.array() - m).exp();
  return w / w.sum();
}

double GaussianMixtureTarget::log_joint(const Vec& z, const Batch&) const {
  check_dim(z);
  Vec lw(components_.size());
  for (std::size_t k = 0; k < components_.size(); ++k) {
    lw[k] = log_weights_[k] + components_[k].log_joint(z);
  }
  const double m = lw.maxCoeff();
  return m + std::log((lw.array() - m).exp().sum());
}

Vec GaussianMixtureTarget::grad_z(const Vec& z, const Batch&) const {
  check_dim(z);
  const Vec resp = responsibilities(z);
  Vec g = Vec::Zero(dim());
  for (std::size_t k = 0; k < components_.size(); ++k) g += resp[k] * components_[k].grad_z(z);
  return g;
}

Vec GaussianMixtureTarget::hvp(const Vec& z, const Vec& v, const Batch&) const {
  check_dim(z);
  check_dim(v);
  // Σ_k r_k (H_k + g_k g_kᵀ) - g gᵀ
  const Vec resp = responsibilities(z);
  Vec g = Vec::Zero(dim());
  Vec out = Vec::Zero(dim());
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const Vec gk = components_[k].grad_z(z);
    g += resp[k] * gk;
    out += resp[k] * (components_[k].hvp(z, v) + gk * gk.dot(v));
  }
  return out - g * g.dot(v);
}

ToyVariant parse_toy_variant(const std::string& name) {
  if (name == "correlated-gaussian") return ToyVariant::CorrelatedGaussian;
  if (name == "banana") return ToyVariant::Banana;
  if (name == "gaussian-mixture") return ToyVariant::GaussianMixture;
  throw std::invalid_argument("unknown toy variant '" + name + "'");
}

std::string to_string(ToyVariant v) {
  switch (v) {
    case ToyVariant::CorrelatedGaussian: return "correlated-gaussian";
    case ToyVariant::Banana: return "banana";
    case ToyVariant::GaussianMixture: return "gaussian-mixture";
  }
  return "unknown";
}

std::unique_ptr<TargetModel> make_toy_target(ToyVariant v) {
  switch (v) {
    case ToyVariant::CorrelatedGaussian: {
      Mat cov(2, 2);
      cov << 1.0, 0.8, 0.8, 1.0;
      return std::make_unique<GaussianTarget>(Vec::Zero(2), cov);
    }
    case ToyVariant::Banana:
      return std::make_unique<BananaTarget>();
    case ToyVariant::GaussianMixture: {
      Mat c1(2, 2), c2(2, 2);
      c1 << 1.0, -0.5, -0.5, 1.0;
      c2 << 1.0, 0.3, 0.3, 1.0;
      std::vector<GaussianTarget> comps;
      comps.emplace_back(Vec::Constant(2, -1.0), c1);
      comps.emplace_back(Vec::Constant(2, 1.3), c2);
      return std::make_unique<GaussianMixtureTarget>(std::vector<double>{0.5, 0.5}, std::move(comps));
    }
  }
  throw std::invalid_argument("unknown toy variant");
}

// ---------------------------------------------------------------------------

ConjugateGaussianModel::ConjugateGaussianModel(Mat data, double prior_var, double noise_sd)
    : data_(std::move(data)), prior_var_(prior_var), noise_sd_(noise_sd) {
  if (!(prior_var_ > 0.0) || !(noise_sd_ > 0.0)) {
    throw std::invalid_argument("ConjugateGaussianModel: variances must be positive");
  }
  if (data_.cols() == 0) throw std::invalid_argument("ConjugateGaussianModel: zero-dimensional data");
}

double ConjugateGaussianModel::log_joint(const Vec& z, const Batch& batch) const {
  check_dim(z);
  const double scale = likelihood_scale(batch);
  const double d = static_cast<double>(dim());
  const double s2 = noise_sd_ * noise_sd_;
  double value = -0.5 * d * (kLog2Pi + std::log(prior_var_)) - 0.5 * z.squaredNorm() / prior_var_;
  double lik = 0.0;
  auto add = [&](Eigen::Index i) {
    lik += -0.5 * d * (kLog2Pi + std::log(s2)) - 0.5 * (data_.row(i).transpose() - z).squaredNorm() / s2;
  };
  if (batch.empty()) {
    for (Eigen::Index i = 0; i < data_.rows(); ++i) add(i);
  } else {
    for (std::size_t i : batch) add(static_cast<Eigen::Index>(i));
  }
  return value + scale * lik;
}

Vec ConjugateGaussianModel::grad_z(const Vec& z, const Batch& batch) const {
  check_dim(z);
  const double scale = likelihood_scale(batch);
  const double s2 = noise_sd_ * noise_sd_;
  Vec g = -z / prior_var_;
  Vec acc = Vec::Zero(dim());
  if (batch.empty()) {
    acc = (data_.rowwise() - z.transpose()).colwise().sum().transpose();
  } else {
    for (std::size_t i : batch) acc += data_.row(static_cast<Eigen::Index>(i)).transpose() - z;
  }
  return g + scale * acc / s2;
}

Vec ConjugateGaussianModel::hvp(const Vec& z, const Vec& v, const Batch& batch) const {
  check_dim(z);
  check_dim(v);
  const double scale = likelihood_scale(batch);
  const double n = batch.empty() ? static_cast<double>(data_.rows()) : static_cast<double>(batch.size());
  return -v / prior_var_ - scale * n * v / (noise_sd_ * noise_sd_);
}

Vec ConjugateGaussianModel::theta() const { return Vec::Constant(1, std::log(noise_sd_)); }

void ConjugateGaussianModel::set_theta(const Vec& theta) {
  if (theta.size() != 1 || !std::isfinite(theta[0])) {
    throw std::invalid_argument("ConjugateGaussianModel: theta must be one finite value");
  }
  noise_sd_ = std::exp(theta[0]);
}

Vec ConjugateGaussianModel::grad_theta(const Vec& z, const Batch& batch) const {
  check_dim(z);
  const double scale = likelihood_scale(batch);
  const double s2 = noise_sd_ * noise_sd_;
  const double d = static_cast<double>(dim());
  double g = 0.0;
  auto add = [&](Eigen::Index i) { g += -d + (data_.row(i).transpose() - z).squaredNorm() / s2; };
  if (batch.empty()) {
    for (Eigen::Index i = 0; i < data_.rows(); ++i) add(i);
  } else {
    for (std::size_t i : batch) add(static_cast<Eigen::Index>(i));
  }
  return Vec::Constant(1, scale * g);
}

double ConjugateGaussianModel::log_evidence() const {
  // Each coordinate's data vector is N(0, s² I + τ² 11ᵀ).
  const double n = static_cast<double>(data_.rows());
  const double s2 = noise_sd_ * noise_sd_;
  const double denom = s2 + n * prior_var_;
  const double logdet = (n - 1.0) * std::log(s2) + std::log(denom);
  double total = 0.0;
  for (Eigen::Index j = 0; j < data_.cols(); ++j) {
    const double sum = data_.col(j).sum();
    const double sq = data_.col(j).squaredNorm();
    const double quad = (sq - prior_var_ * sum * sum / denom) / s2;
    total += -0.5 * n * kLog2Pi - 0.5 * logdet - 0.5 * quad;
  }
  return total;
}

double ConjugateGaussianModel::posterior_var() const {
  return 1.0 / (1.0 / prior_var_ + static_cast<double>(data_.rows()) / (noise_sd_ * noise_sd_));
}

Vec ConjugateGaussianModel::posterior_mean() const {
  return posterior_var() * data_.colwise().sum().transpose() / (noise_sd_ * noise_sd_);
}

// ---------------------------------------------------------------------------

NBModel::NBModel(std::vector<int> counts) : NBModel(std::move(counts), Prior{}) {}

NBModel::NBModel(std::vector<int> counts, Prior prior) : counts_(std::move(counts)), prior_(prior) {
  for (int x : counts_) {
    if (x < 0) throw std::invalid_argument("NBModel: counts must be non-negative");
  }
  full_ = batch_stats({});
}

NBModel::Stats NBModel::batch_stats(const Batch& batch) const {
  Stats st;
  auto add = [&](int x) {
    if (static_cast<std::size_t>(x) > st.tail.size()) st.tail.resize(x, 0.0);
    for (int k = 0; k < x; ++k) st.tail[k] += 1.0;
    st.n += 1.0;
    st.sum_x += x;
    st.sum_lgamma_x1 += std::lgamma(x + 1.0);
  };
  if (batch.empty()) {
    for (int x : counts_) add(x);
  } else {
    for (std::size_t i : batch) add(counts_[i]);
  }
  return st;
}

NBModel::Terms NBModel::evaluate(const Vec& z, const Batch& batch, int order) const {
  check_dim(z);
  const double scale = likelihood_scale(batch);
  const Stats local = batch.empty() ? Stats{} : batch_stats(batch);
  const Stats& st = batch.empty() ? full_ : local;
  const double u = z[0];
  const double w = z[1];
  const double r = std::exp(u);
  const double log_p = -softplus(-w);
  const double log_q = -softplus(w);  // log(1 - p)
  const double p = sigmoid(w);
  const double pq = p * (1.0 - p);
  const auto& pr = prior_;

  Terms t;
  // Priors with the Jacobian of (log, logit).
  t.value = pr.r_shape * std::log(pr.r_rate) - std::lgamma(pr.r_shape) + pr.r_shape * u -
            pr.r_rate * r + pr.p_a * log_p + pr.p_b * log_q - lbeta(pr.p_a, pr.p_b);
  t.grad[0] = pr.r_shape - pr.r_rate * r;
  t.grad[1] = pr.p_a * (1.0 - p) - pr.p_b * p;
  t.hess(0, 0) = -pr.r_rate * r;
  t.hess(1, 1) = -(pr.p_a + pr.p_b) * pq;

  // log(r + k) with k = 0 written as u so r → 0 stays finite; the derivative
  // sums r/(r+k) and -(r/(r+k))² are bounded for every r > 0.
  double lg_sum = 0.0;
  double a_sum = 0.0;
  double t_sum = 0.0;
  for (std::size_t k = 0; k < st.tail.size(); ++k) {
    const double c = st.tail[k];
    lg_sum += c * (k == 0 ? u : std::log(r + static_cast<double>(k)));
    if (order >= 1) {
      const double f = r / (r + static_cast<double>(k));
      a_sum += c * f;
      t_sum -= c * f * f;
    }
  }
  const double value = lg_sum - st.sum_lgamma_x1 + st.sum_x * log_p + st.n * r * log_q;
  t.value += scale * value;
  if (order >= 1) {
    const double a = a_sum + st.n * r * log_q;
    t.grad[0] += scale * a;
    t.grad[1] += scale * (st.sum_x * (1.0 - p) - st.n * r * p);
    if (order >= 2) {
      const double huw = -st.n * r * p;
      t.hess(0, 0) += scale * (a + t_sum);
      t.hess(0, 1) += scale * huw;
      t.hess(1, 0) += scale * huw;
      t.hess(1, 1) += scale * (-(st.sum_x + st.n * r) * pq);
    }
  }
  return t;
}

double NBModel::log_joint(const Vec& z, const Batch& batch) const { return evaluate(z, batch, 0).value; }

Vec NBModel::grad_z(const Vec& z, const Batch& batch) const { return evaluate(z, batch, 1).grad; }

Vec NBModel::hvp(const Vec& z, const Vec& v, const Batch& batch) const {
  check_dim(v);
  return evaluate(z, batch, 2).hess * v;
}

double NBModel::log_density_rp(double r, double p) const {
  const auto& pr = prior_;
  double v = pr.r_shape * std::log(pr.r_rate) - std::lgamma(pr.r_shape) +
             (pr.r_shape - 1.0) * std::log(r) - pr.r_rate * r + (pr.p_a - 1.0) * std::log(p) +
             (pr.p_b - 1.0) * std::log1p(-p) - lbeta(pr.p_a, pr.p_b);
  const double log_p = std::log(p);
  const double log_q = std::log1p(-p);
  for (std::size_t k = 0; k < full_.tail.size(); ++k) v += full_.tail[k] * std::log(r + static_cast<double>(k));
  v += -full_.sum_lgamma_x1 + full_.sum_x * log_p + full_.n * r * log_q;
  return v;
}

double NbGridPosterior::corr_rp() const {
  return cov_rp(0, 1) / std::sqrt(cov_rp(0, 0) * cov_rp(1, 1));
}

namespace {

struct GridEval {
  Vec r;
  Vec p;
  Mat log_density;
  double cell_area;
};

GridEval eval_grid(const NBModel& model, const NbGridSpec& s) {
  GridEval g;
  const double dr = (s.r_max - s.r_min) / s.n_r;
  const double dp = (s.p_max - s.p_min) / s.n_p;
  g.r = Vec::LinSpaced(s.n_r, s.r_min + 0.5 * dr, s.r_max - 0.5 * dr);
  g.p = Vec::LinSpaced(s.n_p, s.p_min + 0.5 * dp, s.p_max - 0.5 * dp);
  g.cell_area = dr * dp;
  g.log_density.resize(s.n_r, s.n_p);
  for (int i = 0; i < s.n_r; ++i) {
    for (int j = 0; j < s.n_p; ++j) g.log_density(i, j) = model.log_density_rp(g.r[i], g.p[j]);
  }
  return g;
}

double log_normalizer(const GridEval& g) {
  const double m = g.log_density.maxCoeff();
  return m + std::log((g.log_density.array() - m).exp().sum() * g.cell_area);
}

}  // namespace

NbGridPosterior nb_grid_posterior(const NBModel& model, const NbGridSpec& spec) {
  if (spec.n_r < 2 || spec.n_p < 2 || !(spec.r_max > spec.r_min) || spec.r_min < 0.0 ||
      !(spec.p_max > spec.p_min) || spec.p_min < 0.0 || spec.p_max > 1.0) {
    throw std::invalid_argument("nb_grid_posterior: invalid grid spec");
  }
  const GridEval g = eval_grid(model, spec);
  const double log_z = log_normalizer(g);

  NbGridSpec fine = spec;
  fine.n_r *= 2;
  fine.n_p *= 2;
  const double log_z_fine = log_normalizer(eval_grid(model, fine));
  if (std::abs(std::expm1(log_z - log_z_fine)) > 1e-3) {
    throw std::runtime_error("nb_grid_posterior: grid too coarse (normalizer drift " +
                             std::to_string(std::abs(std::expm1(log_z - log_z_fine))) + ")");
  }

  NbGridPosterior out;
  out.r = g.r;
  out.p = g.p;
  out.cell_area = g.cell_area;
  out.log_normalizer = log_z;
  out.density = (g.log_density.array() - log_z).exp();
  const Mat mass = out.density * g.cell_area;

  Vec m_rp = Vec::Zero(2);
  Vec m_z = Vec::Zero(2);
  Mat s_rp = Mat::Zero(2, 2);
  Mat s_z = Mat::Zero(2, 2);
  const double total = mass.sum();
  for (Eigen::Index i = 0; i < mass.rows(); ++i) {
    for (Eigen::Index j = 0; j < mass.cols(); ++j) {
      const double w = mass(i, j) / total;
      Vec a(2), b(2);
      a << g.r[i], g.p[j];
      b << std::log(g.r[i]), std::log(g.p[j]) - std::log1p(-g.p[j]);
      m_rp += w * a;
      m_z += w * b;
      s_rp += w * a * a.transpose();
      s_z += w * b * b.transpose();
    }
  }
  out.mean_r = m_rp[0];
  out.mean_p = m_rp[1];
  out.cov_rp = s_rp - m_rp * m_rp.transpose();
  out.mean_z = m_z;
  out.cov_z = s_z - m_z * m_z.transpose();
  return out;
}

NbGridPosterior nb_grid_posterior_auto(const NBModel& model, int cells) {
  double r_hi = 20.0;
  if (!model.counts().empty()) {
    double m = 0.0;
    double v = 0.0;
    for (int x : model.counts()) m += x;
    m /= static_cast<double>(model.counts().size());
    for (int x : model.counts()) v += (x - m) * (x - m);
    v /= std::max<double>(1.0, static_cast<double>(model.counts().size()) - 1.0);
    if (v > m && m > 0.0) {
      const double p_hat = 1.0 - m / v;
      r_hi = std::max(r_hi, 10.0 * m * (1.0 - p_hat) / p_hat);
    }
  }
  // Coarse pass, without the refinement check, to find the bulk.
  NbGridSpec coarse{0.0, r_hi, 0.0, 1.0, 2 * cells, 2 * cells};
  const GridEval g = eval_grid(model, coarse);
  const double log_z = log_normalizer(g);
  double mr = 0.0, mp = 0.0, vr = 0.0, vp = 0.0;
  for (Eigen::Index i = 0; i < g.r.size(); ++i) {
    for (Eigen::Index j = 0; j < g.p.size(); ++j) {
      const double w = std::exp(g.log_density(i, j) - log_z) * g.cell_area;
      mr += w * g.r[i];
      mp += w * g.p[j];
      vr += w * g.r[i] * g.r[i];
      vp += w * g.p[j] * g.p[j];
    }
  }
  const double sr = std::sqrt(std::max(vr - mr * mr, 0.0));
  const double sp = std::sqrt(std::max(vp - mp * mp, 0.0));
  const double cell_r = r_hi / coarse.n_r;
  const double cell_p = 1.0 / coarse.n_p;
  NbGridSpec fine;
  fine.r_min = std::max(0.0, mr - 10.0 * std::max(sr, cell_r));
  fine.r_max = mr + 10.0 * std::max(sr, cell_r);
  fine.p_min = std::max(0.0, mp - 10.0 * std::max(sp, cell_p));
  fine.p_max = std::min(1.0, mp + 10.0 * std::max(sp, cell_p));
  fine.n_r = cells;
  fine.n_p = cells;
  return nb_grid_posterior(model, fine);
}

// ---------------------------------------------------------------------------

LogisticModel::LogisticModel(Mat x, Vec y) : x_(std::move(x)), y_(std::move(y)) {
  if (x_.rows() != y_.size()) throw std::invalid_argument("LogisticModel: X and y row counts differ");
  for (Eigen::Index i = 0; i < y_.size(); ++i) {
    if (y_[i] != 0.0 && y_[i] != 1.0) throw std::invalid_argument("LogisticModel: y must be 0/1");
  }
}

std::vector<std::string> LogisticModel::variable_names() const {
  std::vector<std::string> names;
  for (Eigen::Index i = 0; i < dim(); ++i) names.push_back("beta" + std::to_string(i + 1));
  return names;
}

double LogisticModel::log_joint(const Vec& z, const Batch& batch) const {
  check_dim(z);
  const double scale = likelihood_scale(batch);
  double lik = 0.0;
  auto add = [&](Eigen::Index i) {
    const double s = x_.row(i).dot(z);
    lik += y_[i] * s - softplus(s);
  };
  if (batch.empty()) {
    const Vec s = x_ * z;
    for (Eigen::Index i = 0; i < s.size(); ++i) lik += y_[i] * s[i] - softplus(s[i]);
  } else {
    for (std::size_t i : batch) add(static_cast<Eigen::Index>(i));
  }
  return -0.5 * kLog2Pi * static_cast<double>(dim()) - 0.5 * z.squaredNorm() + scale * lik;
}

Vec LogisticModel::grad_z(const Vec& z, const Batch& batch) const {
  check_dim(z);
  const double scale = likelihood_scale(batch);
  Vec g = Vec::Zero(dim());
  if (batch.empty()) {
    const Vec s = x_ * z;
    Vec resid(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) resid[i] = y_[i] - sigmoid(s[i]);
    g = x_.transpose() * resid;
  } else {
    for (std::size_t i : batch) {
      const auto row = x_.row(static_cast<Eigen::Index>(i));
      g += (y_[static_cast<Eigen::Index>(i)] - sigmoid(row.dot(z))) * row.transpose();
    }
  }
  return scale * g - z;
}

Vec LogisticModel::hvp(const Vec& z, const Vec& v, const Batch& batch) const {
  check_dim(z);
  check_dim(v);
  const double scale = likelihood_scale(batch);
  Vec h = Vec::Zero(dim());
  if (batch.empty()) {
    const Vec s = x_ * z;
    const Vec xv = x_ * v;
    Vec w(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      const double sg = sigmoid(s[i]);
      w[i] = sg * (1.0 - sg) * xv[i];
    }
    h = x_.transpose() * w;
  } else {
    for (std::size_t i : batch) {
      const auto row = x_.row(static_cast<Eigen::Index>(i));
      const double sg = sigmoid(row.dot(z));
      h += sg * (1.0 - sg) * row.dot(v) * row.transpose();
    }
  }
  return -scale * h - v;
}

// ---------------------------------------------------------------------------

BridgeModel::BridgeModel(Mat x, Vec y, double alpha, double rho, double r, double c)
    : x_(std::move(x)), y_(std::move(y)), alpha_(alpha), rho_(rho), r_(r), c_(c) {
  if (x_.rows() != y_.size()) throw std::invalid_argument("BridgeModel: X and y row counts differ");
  if (!(alpha_ > 0.0 && alpha_ < 2.0)) throw std::invalid_argument("BridgeModel: alpha must lie in (0, 2)");
  if (!(rho_ > 0.0)) throw std::invalid_argument("BridgeModel: rho must be positive");
  if (!(r_ > 0.0) || !(c_ > 0.0)) throw std::invalid_argument("BridgeModel: gamma prior must be proper");
  xtx_ = x_.transpose() * x_;
  xty_ = x_.transpose() * y_;
  yty_ = y_.squaredNorm();
}

std::vector<std::string> BridgeModel::variable_names() const {
  std::vector<std::string> names;
  for (Eigen::Index i = 0; i < num_coef(); ++i) names.push_back("beta" + std::to_string(i + 1));
  names.push_back("log_sigma2");
  return names;
}

BridgeModel::Stats BridgeModel::batch_stats(const Vec& beta, const Batch& batch, bool need_xtx) const {
  Stats s;
  s.scale = likelihood_scale(batch);
  if (batch.empty()) {
    s.n = static_cast<double>(x_.rows());
    s.xt_resid = xty_ - xtx_ * beta;
    s.rss = yty_ - 2.0 * beta.dot(xty_) + beta.dot(xtx_ * beta);
    if (need_xtx) s.xtx = xtx_;
  } else {
    s.n = static_cast<double>(batch.size());
    s.xt_resid = Vec::Zero(num_coef());
    s.rss = 0.0;
    if (need_xtx) s.xtx = Mat::Zero(num_coef(), num_coef());
    for (std::size_t i : batch) {
      const auto row = x_.row(static_cast<Eigen::Index>(i));
      const double e = y_[static_cast<Eigen::Index>(i)] - row.dot(beta);
      s.rss += e * e;
      s.xt_resid += e * row.transpose();
      if (need_xtx) s.xtx += row.transpose() * row;
    }
  }
  return s;
}

double BridgeModel::log_joint(const Vec& z, const Batch& batch) const {
  check_dim(z);
  const Eigen::Index p = num_coef();
  const Vec beta = z.head(p);
  const double ell = z[p];
  const double tau = std::exp(-ell);
  const Stats s = batch_stats(beta, batch, false);
  const double pd = static_cast<double>(p);
  const double s_alpha = beta.array().abs().pow(alpha_).sum();
  const double lik = -0.5 * s.n * (kLog2Pi + ell) - 0.5 * tau * s.rss;
  const double prior_beta = pd * (std::log(rho_) / alpha_ - std::log(2.0) - std::lgamma(1.0 + 1.0 / alpha_)) -
                            0.5 * pd * ell - rho_ * std::exp(-0.5 * alpha_ * ell) * s_alpha;
  // Gamma(r, c) on 1/σ² with the Jacobian of ℓ = log σ².
  const double prior_sigma = r_ * std::log(c_) - std::lgamma(r_) - r_ * ell - c_ * tau;
  return s.scale * lik + prior_beta + prior_sigma;
}

Vec BridgeModel::grad_z(const Vec& z, const Batch& batch) const {
  check_dim(z);
  const Eigen::Index p = num_coef();
  const Vec beta = z.head(p);
  const double ell = z[p];
  const double tau = std::exp(-ell);
  const Stats s = batch_stats(beta, batch, false);
  const double k = rho_ * std::exp(-0.5 * alpha_ * ell);
  Vec g(dim());
  double s_alpha = 0.0;
  for (Eigen::Index v = 0; v < p; ++v) {
    const double a = std::abs(beta[v]);
    s_alpha += std::pow(a, alpha_);
    g[v] = s.scale * tau * s.xt_resid[v] - k * alpha_ * std::pow(a, alpha_ - 1.0) * sign(beta[v]);
  }
  g[p] = s.scale * (-0.5 * s.n + 0.5 * tau * s.rss) - 0.5 * static_cast<double>(p) +
         0.5 * alpha_ * k * s_alpha - r_ + c_ * tau;
  return g;
}

Vec BridgeModel::hvp(const Vec& z, const Vec& vec, const Batch& batch) const {
  check_dim(z);
  check_dim(vec);
  const Eigen::Index p = num_coef();
  const Vec beta = z.head(p);
  const double ell = z[p];
  const double tau = std::exp(-ell);
  const Stats s = batch_stats(beta, batch, true);
  const double k = rho_ * std::exp(-0.5 * alpha_ * ell);

  Vec h_bl(p);
  Vec h_bb_diag(p);
  double s_alpha = 0.0;
  for (Eigen::Index v = 0; v < p; ++v) {
    const double a = std::abs(beta[v]);
    s_alpha += std::pow(a, alpha_);
    h_bb_diag[v] = -k * alpha_ * (alpha_ - 1.0) * std::pow(a, alpha_ - 2.0);
    h_bl[v] = -s.scale * tau * s.xt_resid[v] +
              0.5 * alpha_ * k * alpha_ * std::pow(a, alpha_ - 1.0) * sign(beta[v]);
  }
  const double h_ll = -0.5 * s.scale * tau * s.rss - 0.25 * alpha_ * alpha_ * k * s_alpha - c_ * tau;

  Vec out(dim());
  const Vec vb = vec.head(p);
  out.head(p) = -s.scale * tau * (s.xtx * vb) + h_bb_diag.cwiseProduct(vb) + h_bl * vec[p];
  out[p] = h_bl.dot(vb) + h_ll * vec[p];
  return out;
}

// ---------------------------------------------------------------------------

RegressionData standardize(std::vector<std::string> names, const Mat& x, const Vec& y) {
  RegressionData d;
  d.names = std::move(names);
  d.x_mean = x.colwise().mean().transpose();
  d.x = x.rowwise() - d.x_mean.transpose();
  d.x_norm = d.x.colwise().norm().transpose();
  for (Eigen::Index j = 0; j < d.x.cols(); ++j) {
    if (!(d.x_norm[j] > 0.0)) throw std::invalid_argument("standardize: constant column " + d.names[j]);
    d.x.col(j) /= d.x_norm[j];
  }
  d.y_mean = y.mean();
  d.y = y.array() - d.y_mean;
  return d;
}

RegressionData load_diabetes(const std::string& path) {
  const CsvTable t = read_csv(path);
  if (t.header.size() != 11) {
    throw CsvError(path + ": expected 10 predictor columns and a response, found " +
                   std::to_string(t.header.size()) + " columns");
  }
  if (t.rows.rows() == 0) throw CsvError(path + ": no data rows");
  std::vector<std::string> names(t.header.begin(), t.header.end() - 1);
  return standardize(std::move(names), t.rows.leftCols(10), t.rows.col(10));
}

Vec ols(const Mat& x, const Vec& y) {
  const Mat l = cholesky(x.transpose() * x);
  const Vec b = x.transpose() * y;
  const Vec w = l.triangularView<Eigen::Lower>().solve(b);
  return l.triangularView<Eigen::Lower>().transpose().solve(w);
}

}  // namespace mivi
