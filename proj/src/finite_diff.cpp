#include "mivi/finite_diff.hpp"

#include <algorithm>
#include <cmath>

namespace mivi {

Vec finite_diff_grad(const ScalarFn& f, const Vec& x, double h) {
  Vec g(x.size());
  Vec probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double step = h * (std::abs(x[i]) + 1.0);
    probe[i] = x[i] + step;
    const double fp = f(probe);
    probe[i] = x[i] - step;
    const double fm = f(probe);
    probe[i] = x[i];
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("finite_diff_grad: non-finite value at coordinate " + std::to_string(i));
    }
    g[i] = (fp - fm) / (2.0 * step);
  }
  return g;
}

Mat finite_diff_jacobian(const VectorFn& f, const Vec& x, double h) {
  Mat jac;
  Vec probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double step = h * (std::abs(x[i]) + 1.0);
    probe[i] = x[i] + step;
    const Vec fp = f(probe);
    probe[i] = x[i] - step;
    const Vec fm = f(probe);
    probe[i] = x[i];
    if (!fp.allFinite() || !fm.allFinite()) {
      throw NumericError("finite_diff_jacobian: non-finite value at coordinate " +
                         std::to_string(i));
    }
    if (i == 0) jac.resize(fp.size(), x.size());
    jac.col(i) = (fp - fm) / (2.0 * step);
  }
  return jac;
}

double relative_error(const Eigen::Ref<const Mat>& a, const Eigen::Ref<const Mat>& b,
                      double floor) {
  require_same_size(a, b, "relative_error");
  if (a.size() == 0) return 0.0;
  const double scale = std::max(b.cwiseAbs().maxCoeff(), floor);
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

}  // namespace mivi
