/*
 * Copyright 2026 The dpfl-sim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef DPFL_TENSOR_H_
#define DPFL_TENSOR_H_

#include <cstddef>
#include <span>
#include <vector>

#include "absl/status/statusor.h"

namespace dpfl {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles.
class Tensor2 {
 public:
  Tensor2() = default;
  Tensor2(size_t rows, size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  // Fails when data.size() != rows * cols.
  static absl::StatusOr<Tensor2> FromData(size_t rows, size_t cols,
                                          std::vector<double> data);

  size_t rows() const { return rows_; }
  size_t cols() const { return cols_; }
  size_t size() const { return data_.size(); }

  double& operator()(size_t r, size_t c) { return data_[r * cols_ + c]; }
  double operator()(size_t r, size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<const double> data() const { return data_; }
  std::span<double> mutable_data() { return data_; }

  // Copies the listed rows, in order, into a new tensor.
  Tensor2 GatherRows(std::span<const size_t> indices) const;

  bool AllFinite() const;

  friend bool operator==(const Tensor2&, const Tensor2&) = default;

 private:
  size_t rows_ = 0;
  size_t cols_ = 0;
  std::vector<double> data_;
};

double SquaredNorm(std::span<const double> v);
double Norm2(std::span<const double> v);

// y += a * x. Sizes must match.
void Axpy(double a, std::span<const double> x, std::span<double> y);

}  // namespace dpfl

#endif  // DPFL_TENSOR_H_
