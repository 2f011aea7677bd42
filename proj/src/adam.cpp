#include "mivi/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace mivi {

void adam_update(Vec& params, const Vec& grad, AdamState& state, const AdamConfig& config) {
  if (state.m.size() == 0 && state.step == 0) state = AdamState(params.size());
  if (grad.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("adam_update: shape mismatch");
  }
  ensure_finite(grad, "adam_update gradient");
  ++state.step;
  state.m = config.beta1 * state.m + (1.0 - config.beta1) * grad;
  state.v = config.beta2 * state.v + (1.0 - config.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  params.array() -= config.lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + config.eps);
}

}  // namespace mivi
