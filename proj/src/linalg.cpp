#include "mivi/linalg.hpp"

#include <cmath>
#include <string>

namespace mivi {

NotPositiveDefinite::NotPositiveDefinite(Eigen::Index index)
    : std::runtime_error("not positive definite (pivot " + std::to_string(index) + ")"),
      index_(index) {}

Mat cholesky(const Mat& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("cholesky: matrix is not square");
  ensure_finite(a, "cholesky");
  const Eigen::Index n = a.rows();
  const double scale = a.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) {
      if (std::abs(a(i, j) - a(j, i)) > 1e-10 * std::max(scale, 1e-300)) {
        throw std::invalid_argument("cholesky: matrix is not symmetric");
      }
    }
  }

  Mat l = Mat::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = a(j, j) - l.row(j).head(j).squaredNorm();
    if (!(d > 0.0)) throw NotPositiveDefinite(j);
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      l(i, j) = (a(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / ljj;
    }
  }
  return l;
}

Mat phi_lower(const Mat& x) {
  Mat out = x.triangularView<Eigen::Lower>();
  out.diagonal() *= 0.5;
  return out;
}

Mat cholesky_adjoint(const Mat& l, const Mat& l_bar) {
  require_same_size(l, l_bar, "cholesky_adjoint");
  if (l.rows() != l.cols()) throw std::invalid_argument("cholesky_adjoint: L is not square");
  // G = L⁻ᵀ Φ(Lᵀ L̄) L⁻¹, then symmetrize.
  const Mat p = phi_lower(l.transpose() * l_bar.triangularView<Eigen::Lower>().toDenseMatrix());
  Mat g = l.triangularView<Eigen::Lower>().transpose().solve(p);
  g = l.triangularView<Eigen::Lower>().transpose().solve(g.transpose()).transpose();
  return 0.5 * (g + g.transpose());
}

Mat cholesky_tangent(const Mat& l, const Mat& da) {
  require_same_size(l, da, "cholesky_tangent");
  // dL = L Φ(L⁻¹ dA L⁻ᵀ)
  Mat w = l.triangularView<Eigen::Lower>().solve(da);
  w = l.triangularView<Eigen::Lower>().solve(w.transpose()).transpose();
  return l.triangularView<Eigen::Lower>() * phi_lower(w);
}

Mat inverse_from_cholesky(const Mat& l) {
  const Eigen::Index n = l.rows();
  Mat linv = l.triangularView<Eigen::Lower>().solve(Mat::Identity(n, n));
  Mat inv = linv.transpose() * linv;
  return 0.5 * (inv + inv.transpose());
}

Mat spd_inverse(const Mat& a) { return inverse_from_cholesky(cholesky(a)); }

}  // namespace mivi
