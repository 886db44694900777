#include "pfcm/tensor.hpp"

#include <cmath>

#include "pfcm/errors.hpp"

namespace pfcm {

std::size_t shape_product(std::span<const std::size_t> shape) {
  std::size_t p = 1;
  for (std::size_t d : shape) p *= d;
  return p;
}

std::string shape_to_string(std::span<const std::size_t> shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  out += "]";
  return out;
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(shape_product(shape_), fill) {
  for (std::size_t d : shape_) {
    if (d == 0) throw ShapeError("Tensor: zero dimension in shape " + shape_to_string(shape_));
  }
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size()) {
    throw ShapeError("Tensor: shape " + shape_to_string(shape_) + " does not match data length " +
                     std::to_string(data_.size()));
  }
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor slice_rows(const Tensor& t, std::size_t first, std::size_t count) {
  if (t.rank() == 0) throw ShapeError("slice_rows: rank-0 tensor");
  const std::size_t rows = t.dim(0);
  if (first + count > rows) throw ShapeError("slice_rows: range out of bounds");
  const std::size_t stride = t.size() / rows;
  std::vector<std::size_t> shape = t.shape();
  shape[0] = count;
  std::vector<double> data(t.data() + first * stride, t.data() + (first + count) * stride);
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace pfcm
