// Copyright (c) the flowmatch authors
// SPDX-License-Identifier: Apache-2.0
#include "flowmatch/tensor.hpp"

#include <cmath>

namespace flowmatch {

std::string shape_str(const std::vector<std::int64_t>& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(std::vector<std::int64_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  std::int64_t n = 1;
  for (auto d : shape_) {
    FM_CHECK(d >= 0, ShapeError, "negative dimension in shape ", flowmatch::shape_str(shape_));
    n *= d;
  }
  FM_CHECK(n == static_cast<std::int64_t>(data_.size()), ShapeError,
           "shape ", flowmatch::shape_str(shape_), " implies ", n,
           " elements but data has ", data_.size());
}

Tensor Tensor::zeros(std::vector<std::int64_t> shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return Tensor(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 0.0));
}

Tensor Tensor::full(std::vector<std::int64_t> shape, double value) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return Tensor(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), value));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::row(std::vector<double> values) {
  const auto n = static_cast<std::int64_t>(values.size());
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::int64_t rows, std::int64_t cols, std::vector<double> data) {
  return Tensor({rows, cols}, std::move(data));
}

std::int64_t Tensor::rows() const {
  FM_CHECK(rank() == 2, ShapeError, "rows() on tensor of shape ", shape_str());
  return shape_[0];
}

std::int64_t Tensor::cols() const {
  FM_CHECK(rank() == 2, ShapeError, "cols() on tensor of shape ", shape_str());
  return shape_[1];
}

double Tensor::value() const {
  FM_CHECK(numel() == 1, ShapeError, "value() on non-scalar tensor of shape ",
           shape_str());
  return data_[0];
}

std::string Tensor::shape_str() const { return flowmatch::shape_str(shape_); }

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tensor::check_finite(const std::string& context) const {
  FM_CHECK(all_finite(), NumericError, "non-finite value in ", context,
           " (shape ", shape_str(), ")");
}

}  // namespace flowmatch
