#include "glian/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace glian {

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (auto e : shape_) {
    if (e == 0) throw ShapeError("tensor extent must be positive: " + shape_string(shape_));
  }
  data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto e : shape_) {
    if (e == 0) throw ShapeError("tensor extent must be positive: " + shape_string(shape_));
  }
  if (data_.size() != shape_numel(shape_)) {
    throw ShapeError("element count " + std::to_string(data_.size()) +
                     " does not match shape " + shape_string(shape_));
  }
}

double& Tensor::at(std::size_t c, std::size_t y, std::size_t x) {
  const auto d = as_nchw(*this);
  return data_[(c * d.h + y) * d.w + x];
}

double Tensor::at(std::size_t c, std::size_t y, std::size_t x) const {
  const auto d = as_nchw(*this);
  return data_[(c * d.h + y) * d.w + x];
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor " + shape_string(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Dims4 as_nchw(const Tensor& t) {
  if (t.rank() == 4) return {t.dim(0), t.dim(1), t.dim(2), t.dim(3)};
  if (t.rank() == 3) return {1, t.dim(0), t.dim(1), t.dim(2)};
  throw ShapeError("expected [C,H,W] or [N,C,H,W], got " + shape_string(t.shape()));
}

}  // namespace glian
