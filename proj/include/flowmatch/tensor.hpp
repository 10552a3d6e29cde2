// Copyright (c) the flowmatch authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "flowmatch/common.hpp"

namespace flowmatch {

// Dense row-major tensor of 64-bit reals. Rank 0 (scalar), 1 or 2 is what the
// rest of the library uses; the storage itself is rank-agnostic.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<std::int64_t> shape, std::vector<double> data);

  static Tensor zeros(std::vector<std::int64_t> shape);
  static Tensor full(std::vector<std::int64_t> shape, double value);
  static Tensor scalar(double value);
  static Tensor row(std::vector<double> values);               // shape [n]
  static Tensor matrix(std::int64_t rows, std::int64_t cols,
                       std::vector<double> data);

  const std::vector<std::int64_t>& shape() const { return shape_; }
  std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  std::int64_t rows() const;
  std::int64_t cols() const;
  bool is_scalar() const { return data_.size() == 1 && shape_.empty(); }
  bool empty() const { return data_.empty() && shape_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  Span span() { return Span(data_); }
  ConstSpan span() const { return ConstSpan(data_); }

  double& operator[](std::int64_t i) { return data_[i]; }
  double operator[](std::int64_t i) const { return data_[i]; }
  double& at(std::int64_t r, std::int64_t c) { return data_[r * cols() + c]; }
  double at(std::int64_t r, std::int64_t c) const { return data_[r * cols() + c]; }
  double value() const;  // scalar tensors only

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_str() const;

  bool all_finite() const;
  void check_finite(const std::string& context) const;

 private:
  std::vector<std::int64_t> shape_;
  std::vector<double> data_;
};

std::string shape_str(const std::vector<std::int64_t>& shape);

}  // namespace flowmatch
