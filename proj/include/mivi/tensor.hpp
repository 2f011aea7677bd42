#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace mivi {

/// Dense vector of doubles. All numeric state in the library is carried in
/// these two types.
using Vec = Eigen::VectorXd;
/// Dense column-major matrix of doubles.
using Mat = Eigen::MatrixXd;

/// Index set selecting a minibatch of data rows. An empty set means "all rows".
using Batch = std::vector<std::size_t>;

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline bool all_finite(const Eigen::Ref<const Mat>& m) { return m.allFinite(); }

/// Throws NumericError naming `what` if any entry is NaN or infinite.
inline void ensure_finite(const Eigen::Ref<const Mat>& m, const std::string& what) {
  if (!m.allFinite()) throw NumericError(what + ": non-finite entries");
}

inline void ensure_finite(double v, const std::string& what) {
  if (!std::isfinite(v)) throw NumericError(what + ": non-finite value");
}

inline void require_same_size(const Eigen::Ref<const Mat>& a, const Eigen::Ref<const Mat>& b,
                              const std::string& what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(what + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                                "x" + std::to_string(b.cols()) + ")");
  }
}

/// Row-wise table of draws with named columns.
struct SampleTable {
  std::vector<std::string> names;
  Mat rows;  // one draw per row
};

}  // namespace mivi
