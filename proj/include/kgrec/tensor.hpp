// Copyright 2026 The kgrec Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace kgrec {

using Shape = std::vector<std::size_t>;

// Raised when operand shapes are incompatible with an operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

// Dense row-major tensor of 64-bit floats. Every dimension is positive and
// every entry is finite when the tensor is constructed; rank 0 is a scalar.
class Tensor {
 public:
  Tensor() : shape_{}, data_{0.0} {}
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape);
  static Tensor filled(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values);
  static Tensor identity(std::size_t n);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  // Leading dimension; 1 for scalars.
  std::size_t rows() const { return shape_.empty() ? 1 : shape_[0]; }
  // Number of elements per leading-dimension slice.
  std::size_t row_size() const { return data_.size() / rows(); }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double at(std::size_t r, std::size_t c) const {
    return data_[r * row_size() + c];
  }
  double& at(std::size_t r, std::size_t c) { return data_[r * row_size() + c]; }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * row_size(), row_size());
  }
  std::span<double> row(std::size_t r) {
    return std::span<double>(data_).subspan(r * row_size(), row_size());
  }

  // Value of a single-element tensor.
  double item() const;
  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);

}  // namespace kgrec
