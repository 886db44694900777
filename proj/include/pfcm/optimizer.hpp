#pragma once

#include "pfcm/flat_weights.hpp"

namespace pfcm {

struct OptimizerConfig {
  double learning_rate = 0.1;
  double momentum = 0.5;
};

// Classical momentum SGD:
//   velocity <- momentum * velocity + grad
//   model    <- model - learning_rate * velocity
// An OptimizerState belongs to exactly one training context at a time.
struct OptimizerState {
  OptimizerConfig config;
  FlatWeights velocity;

  static OptimizerState fresh(const OptimizerConfig& config, const LayoutPtr& layout);
};

void sgd_step_inplace(FlatWeights& model, const FlatWeights& grad, OptimizerState& state);
FlatWeights sgd_step(const FlatWeights& model, const FlatWeights& grad, OptimizerState& state);

}  // namespace pfcm
