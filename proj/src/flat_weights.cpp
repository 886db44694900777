#include "pfcm/flat_weights.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "pfcm/errors.hpp"

namespace pfcm {

WeightLayout::WeightLayout(std::vector<LayerSlot> slots) : slots_(std::move(slots)) {
  if (slots_.empty()) throw ShapeError("WeightLayout: no slots");
  std::size_t expected = 0;
  for (const LayerSlot& s : slots_) {
    if (s.name.empty()) throw ShapeError("WeightLayout: unnamed slot");
    if (s.size() == 0) throw ShapeError("WeightLayout: empty slot " + s.name);
    if (s.offset != expected) {
      throw ShapeError("WeightLayout: slot " + s.name + " offset " + std::to_string(s.offset) +
                       " breaks contiguity, expected " + std::to_string(expected));
    }
    expected += s.size();
  }
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    for (std::size_t j = i + 1; j < slots_.size(); ++j) {
      if (slots_[i].name == slots_[j].name) {
        throw ShapeError("WeightLayout: duplicate slot name " + slots_[i].name);
      }
    }
  }
  total_ = expected;
}

const LayerSlot& WeightLayout::slot(std::string_view name) const {
  return slots_[slot_index(name)];
}

std::size_t WeightLayout::slot_index(std::string_view name) const {
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    if (slots_[i].name == name) return i;
  }
  throw ShapeError("WeightLayout: no slot named " + std::string(name));
}

bool WeightLayout::operator==(const WeightLayout& other) const {
  if (total_ != other.total_ || slots_.size() != other.slots_.size()) return false;
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    if (slots_[i].name != other.slots_[i].name || slots_[i].shape != other.slots_[i].shape ||
        slots_[i].offset != other.slots_[i].offset) {
      return false;
    }
  }
  return true;
}

FlatWeights::FlatWeights(LayoutPtr layout, double fill)
    : layout_(std::move(layout)), values_(layout_ ? layout_->total() : 0, fill) {
  if (!layout_) throw ShapeError("FlatWeights: null layout");
}

FlatWeights::FlatWeights(LayoutPtr layout, std::vector<double> values)
    : layout_(std::move(layout)), values_(std::move(values)) {
  if (!layout_) throw ShapeError("FlatWeights: null layout");
  if (values_.size() != layout_->total()) {
    throw ShapeError("FlatWeights: layout expects " + std::to_string(layout_->total()) +
                     " values, got " + std::to_string(values_.size()));
  }
}

std::span<double> FlatWeights::slice(std::size_t slot_index) {
  const LayerSlot& s = layout_->slot(slot_index);
  return std::span<double>(values_).subspan(s.offset, s.size());
}

std::span<const double> FlatWeights::slice(std::size_t slot_index) const {
  const LayerSlot& s = layout_->slot(slot_index);
  return std::span<const double>(values_).subspan(s.offset, s.size());
}

std::span<const double> FlatWeights::slice(std::string_view name) const {
  return slice(layout_->slot_index(name));
}

bool FlatWeights::same_layout(const FlatWeights& other) const {
  if (!layout_ || !other.layout_) return false;
  if (layout_ == other.layout_) return true;
  return *layout_ == *other.layout_;
}

void require_same_layout(const FlatWeights& a, const FlatWeights& b, std::string_view context) {
  if (!a.same_layout(b)) {
    throw ShapeError(std::string(context) + ": weight layouts differ");
  }
}

FlatWeights add(const FlatWeights& a, const FlatWeights& b) {
  require_same_layout(a, b, "add");
  FlatWeights out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

FlatWeights subtract(const FlatWeights& a, const FlatWeights& b) {
  require_same_layout(a, b, "subtract");
  FlatWeights out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

FlatWeights scale(const FlatWeights& a, double c) {
  FlatWeights out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
  return out;
}

void add_scaled_inplace(FlatWeights& a, const FlatWeights& b, double c) {
  require_same_layout(a, b, "add_scaled_inplace");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += c * b[i];
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

std::optional<double> cosine_similarity(std::span<const double> a, std::span<const double> b) {
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) return std::nullopt;
  return dot(a, b) / (na * nb);
}

double max_abs_diff(const FlatWeights& a, const FlatWeights& b) {
  require_same_layout(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

bool bit_equal(const FlatWeights& a, const FlatWeights& b) {
  if (!a.same_layout(b)) return false;
  return std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(double)) == 0;
}

FlatWeights flatten(const LayoutPtr& layout, std::span<const Tensor> layers) {
  if (!layout) throw ShapeError("flatten: null layout");
  if (layers.size() != layout->slot_count()) {
    throw ShapeError("flatten: expected " + std::to_string(layout->slot_count()) +
                     " layers, got " + std::to_string(layers.size()));
  }
  FlatWeights out(layout, 0.0);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSlot& s = layout->slot(i);
    if (layers[i].shape() != s.shape) {
      throw ShapeError("flatten: layer " + s.name + " expects shape " +
                       shape_to_string(s.shape) + ", got " + shape_to_string(layers[i].shape()));
    }
    std::copy(layers[i].data(), layers[i].data() + layers[i].size(),
              out.values().data() + s.offset);
  }
  return out;
}

std::vector<Tensor> unflatten(const FlatWeights& w) {
  if (!w.layout()) throw ShapeError("unflatten: weights have no layout");
  std::vector<Tensor> out;
  out.reserve(w.layout()->slot_count());
  for (std::size_t i = 0; i < w.layout()->slot_count(); ++i) {
    const LayerSlot& s = w.layout()->slot(i);
    std::vector<double> data(w.values().begin() + static_cast<std::ptrdiff_t>(s.offset),
                             w.values().begin() + static_cast<std::ptrdiff_t>(s.offset + s.size()));
    out.emplace_back(s.shape, std::move(data));
  }
  return out;
}

}  // namespace pfcm
