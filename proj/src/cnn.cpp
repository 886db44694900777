#include "pfcm/cnn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pfcm/errors.hpp"
#include "pfcm/rng.hpp"

namespace pfcm {

namespace {

// canonical slot order
enum Slot : std::size_t {
  kConv1W = 0,
  kConv1B,
  kConv2W,
  kConv2B,
  kFc1W,
  kFc1B,
  kFc2W,
  kFc2B,
  kSlotCount
};

void conv_forward(const double* in, std::size_t n, int ic, int oc, int s, int k, const double* w,
                  const double* b, double* out) {
  const int pad = k / 2;
  for (std::size_t sample = 0; sample < n; ++sample) {
    const double* in_s = in + sample * static_cast<std::size_t>(ic) * s * s;
    double* out_s = out + sample * static_cast<std::size_t>(oc) * s * s;
    for (int o = 0; o < oc; ++o) {
      const double* w_o = w + static_cast<std::size_t>(o) * ic * k * k;
      for (int y = 0; y < s; ++y) {
        for (int x = 0; x < s; ++x) {
          double acc = b[o];
          for (int c = 0; c < ic; ++c) {
            const double* in_c = in_s + static_cast<std::size_t>(c) * s * s;
            const double* w_c = w_o + static_cast<std::size_t>(c) * k * k;
            for (int ky = 0; ky < k; ++ky) {
              const int yy = y + ky - pad;
              if (yy < 0 || yy >= s) continue;
              for (int kx = 0; kx < k; ++kx) {
                const int xx = x + kx - pad;
                if (xx < 0 || xx >= s) continue;
                acc += in_c[yy * s + xx] * w_c[ky * k + kx];
              }
            }
          }
          out_s[(o * s + y) * s + x] = acc;
        }
      }
    }
  }
}

// accumulates dw/db; din may be null for the first layer
void conv_backward(const double* in, const double* dout, std::size_t n, int ic, int oc, int s,
                   int k, const double* w, double* dw, double* db, double* din) {
  const int pad = k / 2;
  for (std::size_t sample = 0; sample < n; ++sample) {
    const double* in_s = in + sample * static_cast<std::size_t>(ic) * s * s;
    const double* dout_s = dout + sample * static_cast<std::size_t>(oc) * s * s;
    double* din_s = din ? din + sample * static_cast<std::size_t>(ic) * s * s : nullptr;
    for (int o = 0; o < oc; ++o) {
      const double* w_o = w + static_cast<std::size_t>(o) * ic * k * k;
      double* dw_o = dw + static_cast<std::size_t>(o) * ic * k * k;
      for (int y = 0; y < s; ++y) {
        for (int x = 0; x < s; ++x) {
          const double g = dout_s[(o * s + y) * s + x];
          db[o] += g;
          for (int c = 0; c < ic; ++c) {
            const double* in_c = in_s + static_cast<std::size_t>(c) * s * s;
            double* dw_c = dw_o + static_cast<std::size_t>(c) * k * k;
            for (int ky = 0; ky < k; ++ky) {
              const int yy = y + ky - pad;
              if (yy < 0 || yy >= s) continue;
              for (int kx = 0; kx < k; ++kx) {
                const int xx = x + kx - pad;
                if (xx < 0 || xx >= s) continue;
                dw_c[ky * k + kx] += g * in_c[yy * s + xx];
                if (din_s) {
                  din_s[(c * s + yy) * s + xx] += g * w_o[(c * k + ky) * k + kx];
                }
              }
            }
          }
        }
      }
    }
  }
}

void fc_forward(const double* in, std::size_t n, int i_dim, int j_dim, const double* w,
                const double* b, double* out) {
  for (std::size_t sample = 0; sample < n; ++sample) {
    const double* in_s = in + sample * static_cast<std::size_t>(i_dim);
    double* out_s = out + sample * static_cast<std::size_t>(j_dim);
    for (int j = 0; j < j_dim; ++j) {
      const double* w_j = w + static_cast<std::size_t>(j) * i_dim;
      double acc = b[j];
      for (int i = 0; i < i_dim; ++i) acc += w_j[i] * in_s[i];
      out_s[j] = acc;
    }
  }
}

void fc_backward(const double* in, const double* dout, std::size_t n, int i_dim, int j_dim,
                 const double* w, double* dw, double* db, double* din) {
  for (std::size_t sample = 0; sample < n; ++sample) {
    const double* in_s = in + sample * static_cast<std::size_t>(i_dim);
    const double* dout_s = dout + sample * static_cast<std::size_t>(j_dim);
    double* din_s = din ? din + sample * static_cast<std::size_t>(i_dim) : nullptr;
    for (int j = 0; j < j_dim; ++j) {
      const double g = dout_s[j];
      db[j] += g;
      const double* w_j = w + static_cast<std::size_t>(j) * i_dim;
      double* dw_j = dw + static_cast<std::size_t>(j) * i_dim;
      for (int i = 0; i < i_dim; ++i) {
        dw_j[i] += g * in_s[i];
        if (din_s) din_s[i] += g * w_j[i];
      }
    }
  }
}

void relu(const double* in, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
}

// din = dout where pre > 0, else 0
void relu_backward(const double* pre, const double* dout, double* din, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) din[i] = pre[i] > 0.0 ? dout[i] : 0.0;
}

struct Activations {
  std::size_t n = 0;
  std::vector<double> conv1_pre, conv1_act;
  std::vector<double> conv2_pre, conv2_act;
  std::vector<double> fc1_pre, fc1_act;
  std::vector<double> logits;
};

void check_model(const FlatWeights& model, const CnnSpec& spec) {
  const LayoutPtr expected = spec.layout();
  if (!model.layout()) throw ShapeError("model has no layout");
  if (*model.layout() == *expected) return;
  // name the first offending layer
  const auto got = model.layout()->slots();
  const auto want = expected->slots();
  for (std::size_t i = 0; i < std::min(got.size(), want.size()); ++i) {
    if (got[i].name != want[i].name || got[i].shape != want[i].shape) {
      throw ShapeError("model layout mismatch at layer " + want[i].name + ": expected " +
                       shape_to_string(want[i].shape) + ", got " + got[i].name + " " +
                       shape_to_string(got[i].shape));
    }
  }
  throw ShapeError("model layout has " + std::to_string(got.size()) + " layers, expected " +
                   std::to_string(want.size()));
}

void check_batch(const Tensor& batch, const CnnSpec& spec) {
  const std::size_t s = static_cast<std::size_t>(spec.input_side);
  if (batch.rank() != 4 || batch.dim(1) != static_cast<std::size_t>(spec.in_channels) ||
      batch.dim(2) != s || batch.dim(3) != s || batch.dim(0) == 0) {
    throw ShapeError("input batch: expected [N," + std::to_string(spec.in_channels) + "," +
                     std::to_string(spec.input_side) + "," + std::to_string(spec.input_side) +
                     "], got " + shape_to_string(batch.shape()));
  }
}

Activations run_forward(const FlatWeights& model, const CnnSpec& spec, const Tensor& batch) {
  check_model(model, spec);
  check_batch(batch, spec);

  const std::size_t n = batch.dim(0);
  const int s = spec.input_side;
  const std::size_t plane = static_cast<std::size_t>(s) * s;

  Activations act;
  act.n = n;
  act.conv1_pre.resize(n * spec.conv1_channels * plane);
  act.conv1_act.resize(act.conv1_pre.size());
  act.conv2_pre.resize(n * spec.conv2_channels * plane);
  act.conv2_act.resize(act.conv2_pre.size());
  act.fc1_pre.resize(n * spec.fc_hidden);
  act.fc1_act.resize(act.fc1_pre.size());
  act.logits.resize(n * spec.num_classes);

  conv_forward(batch.data(), n, spec.in_channels, spec.conv1_channels, s, spec.kernel_side,
               model.slice(kConv1W).data(), model.slice(kConv1B).data(), act.conv1_pre.data());
  relu(act.conv1_pre.data(), act.conv1_act.data(), act.conv1_pre.size());

  conv_forward(act.conv1_act.data(), n, spec.conv1_channels, spec.conv2_channels, s,
               spec.kernel_side, model.slice(kConv2W).data(), model.slice(kConv2B).data(),
               act.conv2_pre.data());
  relu(act.conv2_pre.data(), act.conv2_act.data(), act.conv2_pre.size());

  // conv2_act [N,C2,S,S] is already the row-major flatten [N, C2*S*S]
  const int flat = static_cast<int>(spec.flat_conv_size());
  fc_forward(act.conv2_act.data(), n, flat, spec.fc_hidden, model.slice(kFc1W).data(),
             model.slice(kFc1B).data(), act.fc1_pre.data());
  relu(act.fc1_pre.data(), act.fc1_act.data(), act.fc1_pre.size());

  fc_forward(act.fc1_act.data(), n, spec.fc_hidden, spec.num_classes, model.slice(kFc2W).data(),
             model.slice(kFc2B).data(), act.logits.data());
  return act;
}

// mean cross-entropy; fills dlogits with (softmax - onehot)/N when requested
double softmax_cross_entropy(const double* logits, std::span<const int> labels, std::size_t n,
                             int classes, double* dlogits) {
  double loss = 0.0;
  std::vector<double> probs(static_cast<std::size_t>(classes));
  for (std::size_t sample = 0; sample < n; ++sample) {
    const double* row = logits + sample * classes;
    double peak = row[0];
    for (int c = 1; c < classes; ++c) peak = std::max(peak, row[c]);
    double z = 0.0;
    for (int c = 0; c < classes; ++c) {
      probs[static_cast<std::size_t>(c)] = std::exp(row[c] - peak);
      z += probs[static_cast<std::size_t>(c)];
    }
    const int label = labels[sample];
    loss += -(row[label] - peak - std::log(z));
    if (dlogits) {
      double* drow = dlogits + sample * classes;
      for (int c = 0; c < classes; ++c) {
        const double p = probs[static_cast<std::size_t>(c)] / z;
        drow[c] = (p - (c == label ? 1.0 : 0.0)) / static_cast<double>(n);
      }
    }
  }
  return loss / static_cast<double>(n);
}

void check_labels(std::span<const int> labels, std::size_t n, int classes) {
  if (labels.size() != n) {
    throw ShapeError("labels: expected " + std::to_string(n) + " entries, got " +
                     std::to_string(labels.size()));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) {
      throw DataError("label " + std::to_string(labels[i]) + " out of range [0," +
                      std::to_string(classes) + ") at sample " + std::to_string(i));
    }
  }
}

}  // namespace

void CnnSpec::validate() const {
  if (input_side <= 0 || in_channels <= 0 || conv1_channels <= 0 || conv2_channels <= 0 ||
      fc_hidden <= 0) {
    throw ConfigError("CnnSpec: all dimensions must be positive");
  }
  if (kernel_side <= 0 || kernel_side % 2 == 0) {
    throw ConfigError("CnnSpec: kernel_side must be odd and positive for same-size padding");
  }
  if (kernel_side / 2 >= input_side) {
    throw ConfigError("CnnSpec: kernel larger than the padded input");
  }
  if (num_classes != 2 && num_classes != 3) {
    throw ConfigError("CnnSpec: num_classes must be 2 or 3");
  }
}

LayoutPtr CnnSpec::layout() const {
  validate();
  const auto u = [](int v) { return static_cast<std::size_t>(v); };
  std::vector<LayerSlot> slots;
  std::size_t off = 0;
  const auto push = [&](std::string name, std::vector<std::size_t> shape) {
    LayerSlot slot{std::move(name), std::move(shape), off};
    off += slot.size();
    slots.push_back(std::move(slot));
  };
  push("conv1.weight", {u(conv1_channels), u(in_channels), u(kernel_side), u(kernel_side)});
  push("conv1.bias", {u(conv1_channels)});
  push("conv2.weight", {u(conv2_channels), u(conv1_channels), u(kernel_side), u(kernel_side)});
  push("conv2.bias", {u(conv2_channels)});
  push("fc1.weight", {u(fc_hidden), flat_conv_size()});
  push("fc1.bias", {u(fc_hidden)});
  push("fc2.weight", {u(num_classes), u(fc_hidden)});
  push("fc2.bias", {u(num_classes)});
  return std::make_shared<WeightLayout>(std::move(slots));
}

std::size_t CnnSpec::param_count() const { return layout()->total(); }

Tensor forward(const FlatWeights& model, const CnnSpec& spec, const Tensor& batch) {
  Activations act = run_forward(model, spec, batch);
  return Tensor({act.n, static_cast<std::size_t>(spec.num_classes)}, std::move(act.logits));
}

std::vector<int> predict(const FlatWeights& model, const CnnSpec& spec, const Tensor& batch) {
  const Tensor logits = forward(model, spec, batch);
  const std::size_t n = logits.dim(0);
  const int classes = static_cast<int>(logits.dim(1));
  std::vector<int> out(n);
  for (std::size_t sample = 0; sample < n; ++sample) {
    const double* row = logits.data() + sample * classes;
    int best = 0;
    for (int c = 1; c < classes; ++c) {
      if (row[c] > row[best]) best = c;
    }
    out[sample] = best;
  }
  return out;
}

double batch_loss(const FlatWeights& model, const CnnSpec& spec, const Tensor& batch,
                  std::span<const int> labels) {
  Activations act = run_forward(model, spec, batch);
  check_labels(labels, act.n, spec.num_classes);
  return softmax_cross_entropy(act.logits.data(), labels, act.n, spec.num_classes, nullptr);
}

LossGrad loss_and_grad(const FlatWeights& model, const CnnSpec& spec, const Tensor& batch,
                       std::span<const int> labels) {
  Activations act = run_forward(model, spec, batch);
  check_labels(labels, act.n, spec.num_classes);

  const std::size_t n = act.n;
  const int s = spec.input_side;
  const int flat = static_cast<int>(spec.flat_conv_size());

  LossGrad out;
  out.grad = FlatWeights(model.layout(), 0.0);

  std::vector<double> dlogits(n * spec.num_classes);
  out.loss = softmax_cross_entropy(act.logits.data(), labels, n, spec.num_classes, dlogits.data());
  if (!std::isfinite(out.loss)) throw Error("loss_and_grad: non-finite loss");

  std::vector<double> dfc1_act(act.fc1_act.size(), 0.0);
  fc_backward(act.fc1_act.data(), dlogits.data(), n, spec.fc_hidden, spec.num_classes,
              model.slice(kFc2W).data(), out.grad.slice(kFc2W).data(),
              out.grad.slice(kFc2B).data(), dfc1_act.data());

  std::vector<double> dfc1_pre(act.fc1_pre.size());
  relu_backward(act.fc1_pre.data(), dfc1_act.data(), dfc1_pre.data(), dfc1_pre.size());

  std::vector<double> dconv2_act(act.conv2_act.size(), 0.0);
  fc_backward(act.conv2_act.data(), dfc1_pre.data(), n, flat, spec.fc_hidden,
              model.slice(kFc1W).data(), out.grad.slice(kFc1W).data(),
              out.grad.slice(kFc1B).data(), dconv2_act.data());

  std::vector<double> dconv2_pre(act.conv2_pre.size());
  relu_backward(act.conv2_pre.data(), dconv2_act.data(), dconv2_pre.data(), dconv2_pre.size());

  std::vector<double> dconv1_act(act.conv1_act.size(), 0.0);
  conv_backward(act.conv1_act.data(), dconv2_pre.data(), n, spec.conv1_channels,
                spec.conv2_channels, s, spec.kernel_side, model.slice(kConv2W).data(),
                out.grad.slice(kConv2W).data(), out.grad.slice(kConv2B).data(),
                dconv1_act.data());

  std::vector<double> dconv1_pre(act.conv1_pre.size());
  relu_backward(act.conv1_pre.data(), dconv1_act.data(), dconv1_pre.data(), dconv1_pre.size());

  conv_backward(batch.data(), dconv1_pre.data(), n, spec.in_channels, spec.conv1_channels, s,
                spec.kernel_side, model.slice(kConv1W).data(), out.grad.slice(kConv1W).data(),
                out.grad.slice(kConv1B).data(), nullptr);
  return out;
}

FlatWeights init_weights(const CnnSpec& spec, std::uint64_t seed) {
  const LayoutPtr layout = spec.layout();
  FlatWeights w(layout, 0.0);
  Rng rng(seed);

  const double fan_conv1 = static_cast<double>(spec.in_channels) * spec.kernel_side * spec.kernel_side;
  const double fan_conv2 = static_cast<double>(spec.conv1_channels) * spec.kernel_side * spec.kernel_side;
  const double fan_fc1 = static_cast<double>(spec.flat_conv_size());
  const double fan_fc2 = static_cast<double>(spec.fc_hidden);
  const double bounds[kSlotCount] = {
      1.0 / std::sqrt(fan_conv1), 1.0 / std::sqrt(fan_conv1),
      1.0 / std::sqrt(fan_conv2), 1.0 / std::sqrt(fan_conv2),
      1.0 / std::sqrt(fan_fc1),   1.0 / std::sqrt(fan_fc1),
      1.0 / std::sqrt(fan_fc2),   1.0 / std::sqrt(fan_fc2),
  };
  for (std::size_t i = 0; i < kSlotCount; ++i) {
    for (double& v : w.slice(i)) v = rng.uniform(-bounds[i], bounds[i]);
  }
  return w;
}

}  // namespace pfcm
