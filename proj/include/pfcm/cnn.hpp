#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pfcm/flat_weights.hpp"
#include "pfcm/tensor.hpp"

namespace pfcm {

// Fixed architecture: two 3x3 "same"-padded convolutions (ReLU), flatten,
// one hidden fully-connected layer (ReLU), linear output layer. Spatial size
// is preserved through both convolutions, so a 9x9 input stays 9x9.
struct CnnSpec {
  int input_side = 9;
  int in_channels = 1;
  int conv1_channels = 10;
  int conv2_channels = 20;
  int kernel_side = 3;
  int fc_hidden = 50;
  int num_classes = 3;

  void validate() const;
  LayoutPtr layout() const;
  std::size_t param_count() const;
  std::size_t flat_conv_size() const {
    return static_cast<std::size_t>(conv2_channels) * input_side * input_side;
  }
};

// batch [N, in_channels, S, S] -> logits [N, num_classes]
Tensor forward(const FlatWeights& model, const CnnSpec& spec, const Tensor& batch);

// argmax of logits per row, ties resolved to the lowest class id
std::vector<int> predict(const FlatWeights& model, const CnnSpec& spec, const Tensor& batch);

// mean softmax cross-entropy over the batch
double batch_loss(const FlatWeights& model, const CnnSpec& spec, const Tensor& batch,
                  std::span<const int> labels);

struct LossGrad {
  double loss = 0.0;
  FlatWeights grad;
};

// loss plus its gradient with the model's layout; the backward pass is
// hand-derived for this fixed architecture
LossGrad loss_and_grad(const FlatWeights& model, const CnnSpec& spec, const Tensor& batch,
                       std::span<const int> labels);

// uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)] per layer, deterministic per seed
FlatWeights init_weights(const CnnSpec& spec, std::uint64_t seed);

}  // namespace pfcm
