#pragma once

#include "mivi/random.hpp"
#include "mivi/tensor.hpp"

#include <vector>

namespace mivi {

/// Diagonal Gaussian q_φ(z) = N(mean, diag(exp(log_var))).
struct VariationalParams {
  Vec mean;
  Vec log_var;

  VariationalParams() = default;
  VariationalParams(Vec m, Vec lv);
  static VariationalParams standard(Eigen::Index dim);

  Eigen::Index dim() const { return mean.size(); }
  /// Standard deviations, with log_var clipped to [-60, 60].
  Vec sd() const;
  Vec variance() const;
  /// Packs (mean, log_var) into one vector for the optimizer.
  Vec flat() const;
  static VariationalParams from_flat(const Vec& v);
};

inline constexpr double kLogVarClip = 60.0;

struct QSample {
  Vec z;
  Vec eps;
};

/// z = mean + exp(log_var / 2) ⊙ ε with ε ~ N(0, I).
QSample q_sample(const VariationalParams& phi, RngStream& rng);
Vec q_transform(const VariationalParams& phi, const Vec& eps);

struct QLogPdf {
  double value;
  Vec d_mean;
  Vec d_log_var;
  Vec d_z;
};

QLogPdf q_logpdf(const VariationalParams& phi, const Vec& z);
double q_logpdf_value(const VariationalParams& phi, const Vec& z);

/// Gradient w.r.t. (mean, log_var) of -(1/S) Σ_s log q_φ(z_s) with the samples
/// held fixed. Returned as a flat vector [d_mean; d_log_var].
Vec cross_entropy_grad(const VariationalParams& phi, const std::vector<Vec>& samples);

/// The value -(1/S) Σ_s log q_φ(z_s).
double cross_entropy(const VariationalParams& phi, const std::vector<Vec>& samples);

}  // namespace mivi
