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

#include "dpfl/tensor.h"

#include <cassert>
#include <cmath>
#include <utility>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"

namespace dpfl {

absl::StatusOr<Tensor2> Tensor2::FromData(size_t rows, size_t cols,
                                          std::vector<double> data) {
  if (data.size() != rows * cols) {
    return absl::InvalidArgumentError(
        absl::StrCat("tensor data has ", data.size(), " entries, expected ",
                     rows, "x", cols));
  }
  Tensor2 t;
  t.rows_ = rows;
  t.cols_ = cols;
  t.data_ = std::move(data);
  return t;
}

Tensor2 Tensor2::GatherRows(std::span<const size_t> indices) const {
  Tensor2 out(indices.size(), cols_);
  for (size_t i = 0; i < indices.size(); ++i) {
    const auto src = row(indices[i]);
    auto dst = out.row(i);
    for (size_t c = 0; c < cols_; ++c) dst[c] = src[c];
  }
  return out;
}

bool Tensor2::AllFinite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double SquaredNorm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

double Norm2(std::span<const double> v) { return std::sqrt(SquaredNorm(v)); }

void Axpy(double a, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  for (size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

}  // namespace dpfl
