#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace mivi {

struct GradcheckOptions {
  int configs = 20;            // random configurations per suite
  std::uint64_t seed = 2024;
  double tolerance = 1e-4;
  std::string diabetes_path;   // optional: bridge suite subsamples these rows
};

struct GradcheckReport {
  std::map<std::string, double> max_rel_error;  // per suite
  int configs = 0;
  double tolerance = 0.0;
  bool passed() const;
};

/// Compares every hand-derived gradient, Hessian-vector product and adjoint
/// against central finite differences.
GradcheckReport run_gradient_suites(const GradcheckOptions& options);

}  // namespace mivi
