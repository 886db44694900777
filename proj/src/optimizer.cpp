#include "pfcm/optimizer.hpp"

#include "pfcm/errors.hpp"

namespace pfcm {

OptimizerState OptimizerState::fresh(const OptimizerConfig& config, const LayoutPtr& layout) {
  return OptimizerState{config, FlatWeights(layout, 0.0)};
}

void sgd_step_inplace(FlatWeights& model, const FlatWeights& grad, OptimizerState& state) {
  require_same_layout(model, grad, "sgd_step");
  require_same_layout(model, state.velocity, "sgd_step (velocity)");
  const double m = state.config.momentum;
  const double lr = state.config.learning_rate;
  for (std::size_t i = 0; i < model.size(); ++i) {
    state.velocity[i] = m * state.velocity[i] + grad[i];
    model[i] -= lr * state.velocity[i];
  }
}

FlatWeights sgd_step(const FlatWeights& model, const FlatWeights& grad, OptimizerState& state) {
  FlatWeights out = model;
  sgd_step_inplace(out, grad, state);
  return out;
}

}  // namespace pfcm
