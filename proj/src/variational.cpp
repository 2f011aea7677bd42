#include "mivi/variational.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mivi {

namespace {
constexpr double kHalfLog2Pi = 0.91893853320467274178;

Vec clipped(const Vec& lv) { return lv.cwiseMax(-kLogVarClip).cwiseMin(kLogVarClip); }
}  // namespace

VariationalParams::VariationalParams(Vec m, Vec lv) : mean(std::move(m)), log_var(std::move(lv)) {
  if (mean.size() != log_var.size()) {
    throw std::invalid_argument("VariationalParams: mean and log_var differ in size");
  }
  ensure_finite(log_var, "VariationalParams.log_var");
}

VariationalParams VariationalParams::standard(Eigen::Index dim) {
  return {Vec::Zero(dim), Vec::Zero(dim)};
}

Vec VariationalParams::sd() const { return (0.5 * clipped(log_var)).array().exp(); }
Vec VariationalParams::variance() const { return clipped(log_var).array().exp(); }

Vec VariationalParams::flat() const {
  Vec v(2 * dim());
  v << mean, log_var;
  return v;
}

VariationalParams VariationalParams::from_flat(const Vec& v) {
  const Eigen::Index d = v.size() / 2;
  return {v.head(d), v.tail(d)};
}

Vec q_transform(const VariationalParams& phi, const Vec& eps) {
  require_same_size(phi.mean, eps, "q_transform");
  return phi.mean + phi.sd().cwiseProduct(eps);
}

QSample q_sample(const VariationalParams& phi, RngStream& rng) {
  Vec eps = rng.normal_vec(phi.dim());
  Vec z = q_transform(phi, eps);
  return {std::move(z), std::move(eps)};
}

QLogPdf q_logpdf(const VariationalParams& phi, const Vec& z) {
  require_same_size(phi.mean, z, "q_logpdf");
  const Vec lv = clipped(phi.log_var);
  const Vec var = lv.array().exp();
  const Vec diff = z - phi.mean;
  const Vec scaled = diff.cwiseQuotient(var);
  QLogPdf out;
  out.value = -kHalfLog2Pi * z.size() - 0.5 * lv.sum() - 0.5 * diff.dot(scaled);
  out.d_mean = scaled;
  out.d_z = -scaled;
  out.d_log_var = (-0.5 + 0.5 * diff.cwiseProduct(scaled).array()).matrix();
  // Clipped coordinates do not move the value.
  for (Eigen::Index i = 0; i < lv.size(); ++i) {
    if (phi.log_var[i] != lv[i]) out.d_log_var[i] = 0.0;
  }
  return out;
}

double q_logpdf_value(const VariationalParams& phi, const Vec& z) {
  require_same_size(phi.mean, z, "q_logpdf");
  const Vec lv = clipped(phi.log_var);
  const Vec diff = z - phi.mean;
  return -kHalfLog2Pi * z.size() - 0.5 * lv.sum() -
         0.5 * diff.cwiseProduct(diff).cwiseQuotient(lv.array().exp().matrix()).sum();
}

Vec cross_entropy_grad(const VariationalParams& phi, const std::vector<Vec>& samples) {
  if (samples.empty()) throw std::invalid_argument("cross_entropy_grad: empty sample set");
  Vec g = Vec::Zero(2 * phi.dim());
  for (const Vec& z : samples) {
    const QLogPdf lp = q_logpdf(phi, z);
    g.head(phi.dim()) -= lp.d_mean;
    g.tail(phi.dim()) -= lp.d_log_var;
  }
  return g / static_cast<double>(samples.size());
}

double cross_entropy(const VariationalParams& phi, const std::vector<Vec>& samples) {
  if (samples.empty()) throw std::invalid_argument("cross_entropy: empty sample set");
  double s = 0.0;
  for (const Vec& z : samples) s -= q_logpdf_value(phi, z);
  return s / static_cast<double>(samples.size());
}

}  // namespace mivi
