#pragma once

#include "mivi/tensor.hpp"

#include <stdexcept>

namespace mivi {

/// Raised by cholesky() when a pivot is non-positive.
class NotPositiveDefinite : public std::runtime_error {
 public:
  explicit NotPositiveDefinite(Eigen::Index index);
  Eigen::Index index() const { return index_; }

 private:
  Eigen::Index index_;
};

/// Lower-triangular L with L Lᵀ = A. A must be square and symmetric to 1e-10
/// relative tolerance; only the lower triangle is read.
Mat cholesky(const Mat& a);

/// Reverse-mode rule for the Cholesky factorization. Given L = cholesky(A) and
/// the cotangent L̄ = ∂f/∂L, returns the symmetric Ā such that
/// df = Σ_ij Ā_ij dA_ij for every symmetric perturbation dA.
Mat cholesky_adjoint(const Mat& l, const Mat& l_bar);

/// Forward-mode rule: the tangent dL of L = cholesky(A) along symmetric dA.
Mat cholesky_tangent(const Mat& l, const Mat& da);

/// Inverse of an SPD matrix via its Cholesky factor.
Mat spd_inverse(const Mat& a);

/// Inverse from an existing Cholesky factor.
Mat inverse_from_cholesky(const Mat& l);

/// Lower triangle with the diagonal halved.
Mat phi_lower(const Mat& x);

}  // namespace mivi
