#pragma once

#include "mivi/tensor.hpp"

#include <functional>

namespace mivi {

using ScalarFn = std::function<double(const Vec&)>;
using VectorFn = std::function<Vec(const Vec&)>;

/// Central-difference gradient. The probe for coordinate i is h·(|x_i| + 1).
/// Throws NumericError if f is non-finite at any probe.
Vec finite_diff_grad(const ScalarFn& f, const Vec& x, double h = 1e-5);

/// Central-difference Jacobian (rows = outputs, cols = inputs).
Mat finite_diff_jacobian(const VectorFn& f, const Vec& x, double h = 1e-5);

/// max_i |a_i - b_i| / max(max_i |b_i|, floor). Used by every gradient check.
double relative_error(const Eigen::Ref<const Mat>& a, const Eigen::Ref<const Mat>& b,
                      double floor = 1e-8);

}  // namespace mivi
