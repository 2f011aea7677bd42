#pragma once

#include "mivi/random.hpp"
#include "mivi/tensor.hpp"

#include <vector>

namespace mivi {

/// Fully connected network with tanh hidden layers, evaluated on column
/// batches. Parameters live in one flat vector so optimizers and finite
/// differences can treat the network as a point in R^k.
class Mlp {
 public:
  enum class Output { Linear, Softplus };

  struct Cache {
    std::vector<Mat> activations;  // input, then each hidden layer's output
    Mat pre_output;
  };

  Mlp() = default;
  /// sizes = {in, hidden..., out}.
  Mlp(std::vector<int> sizes, Output output);

  /// Uniform(-1/√fan_in, 1/√fan_in) weights, zero biases; optionally zeroes the
  /// final layer.
  void initialize(RngStream& rng, bool zero_last_layer);

  Eigen::Index num_params() const { return params_.size(); }
  const Vec& params() const { return params_; }
  void set_params(const Vec& p);
  const std::vector<int>& sizes() const { return sizes_; }
  int input_dim() const { return sizes_.front(); }
  Output output() const { return output_; }

  /// input: in × B. Returns out × B.
  Mat forward(const Mat& input, Cache* cache = nullptr) const;

  /// Backpropagates out_bar (out × B). Adds parameter gradients into
  /// *param_grad when non-null and returns the input gradient (in × B).
  Mat backward(const Cache& cache, const Mat& out_bar, Vec* param_grad) const;

 private:
  Eigen::Index weight_offset(std::size_t layer) const { return offsets_[layer]; }
  Eigen::Index bias_offset(std::size_t layer) const {
    return offsets_[layer] + static_cast<Eigen::Index>(sizes_[layer + 1]) * sizes_[layer];
  }

  std::vector<int> sizes_;
  Output output_ = Output::Linear;
  std::vector<Eigen::Index> offsets_;
  Vec params_;
};

}  // namespace mivi
