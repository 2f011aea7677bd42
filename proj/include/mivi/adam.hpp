#pragma once

#include "mivi/tensor.hpp"

namespace mivi {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Vec m;
  Vec v;
  long step = 0;

  AdamState() = default;
  explicit AdamState(Eigen::Index n) : m(Vec::Zero(n)), v(Vec::Zero(n)) {}
};

/// One bias-corrected Adam step minimizing along `grad`. Updates params and
/// state in place.
void adam_update(Vec& params, const Vec& grad, AdamState& state, const AdamConfig& config);

}  // namespace mivi
