#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pfcm/tensor.hpp"

namespace pfcm {

struct LayerSlot {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;

  std::size_t size() const { return shape_product(shape); }
};

// Canonical flattening order of a model's parameters. Offsets must be
// contiguous from zero; gaps, overlaps and permuted slot order are rejected
// so that any two FlatWeights with equal layouts are elementwise comparable.
class WeightLayout {
 public:
  explicit WeightLayout(std::vector<LayerSlot> slots);

  std::size_t total() const { return total_; }
  std::span<const LayerSlot> slots() const { return slots_; }
  std::size_t slot_count() const { return slots_.size(); }
  const LayerSlot& slot(std::size_t i) const { return slots_[i]; }
  const LayerSlot& slot(std::string_view name) const;
  std::size_t slot_index(std::string_view name) const;

  bool operator==(const WeightLayout& other) const;

 private:
  std::vector<LayerSlot> slots_;
  std::size_t total_ = 0;
};

using LayoutPtr = std::shared_ptr<const WeightLayout>;

// Flattened, ordered view of all model parameters: the unit of federated
// averaging, clustering and similarity.
class FlatWeights {
 public:
  FlatWeights() = default;
  explicit FlatWeights(LayoutPtr layout, double fill = 0.0);
  FlatWeights(LayoutPtr layout, std::vector<double> values);

  const LayoutPtr& layout() const { return layout_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> slice(std::size_t slot_index);
  std::span<const double> slice(std::size_t slot_index) const;
  std::span<const double> slice(std::string_view name) const;

  bool same_layout(const FlatWeights& other) const;

 private:
  LayoutPtr layout_;
  std::vector<double> values_;
};

void require_same_layout(const FlatWeights& a, const FlatWeights& b, std::string_view context);

FlatWeights add(const FlatWeights& a, const FlatWeights& b);
FlatWeights subtract(const FlatWeights& a, const FlatWeights& b);
FlatWeights scale(const FlatWeights& a, double c);
// a += c * b
void add_scaled_inplace(FlatWeights& a, const FlatWeights& b, double c);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);
// nullopt when either vector has zero norm
std::optional<double> cosine_similarity(std::span<const double> a, std::span<const double> b);

double max_abs_diff(const FlatWeights& a, const FlatWeights& b);
bool bit_equal(const FlatWeights& a, const FlatWeights& b);

// layers must follow the layout's canonical slot order and shapes
FlatWeights flatten(const LayoutPtr& layout, std::span<const Tensor> layers);
std::vector<Tensor> unflatten(const FlatWeights& w);

}  // namespace pfcm
