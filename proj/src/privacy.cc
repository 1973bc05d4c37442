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

#include "dpfl/privacy.h"

#include <cmath>

#include "absl/strings/str_cat.h"

namespace dpfl {

absl::StatusOr<ClipResult> ClipUpdate(std::span<const double> delta, double clip) {
  if (!(clip > 0.0)) {
    return absl::InvalidArgumentError(absl::StrCat("clip threshold must be > 0, got ", clip));
  }
  ClipResult out;
  out.pre_norm = Norm2(delta);
  out.clipped.assign(delta.begin(), delta.end());
  if (out.pre_norm > clip) {
    out.alpha = clip / out.pre_norm;
    for (double& v : out.clipped) v *= out.alpha;
  }
  return out;
}

absl::StatusOr<Vector> AddGaussianNoise(std::span<const double> clipped, double clip,
                                        double sigma, double denom, RngEngine& rng) {
  if (!(sigma >= 0.0)) {
    return absl::InvalidArgumentError(absl::StrCat("noise multiplier must be >= 0, got ", sigma));
  }
  if (!(denom >= 1.0)) {
    return absl::InvalidArgumentError(
        absl::StrCat("noise denominator must be >= 1, got ", denom));
  }
  Vector out(clipped.begin(), clipped.end());
  if (sigma == 0.0) return out;
  const double stddev = clip * sigma / std::sqrt(denom);
  if (!std::isfinite(stddev)) {
    return absl::InvalidArgumentError("noise scale is not finite (unbounded clip with sigma > 0)");
  }
  std::normal_distribution<double> noise(0.0, stddev);
  for (double& v : out) v += noise(rng);
  return out;
}

double SumSensitivityCheck(std::span<const Vector> updates, std::span<const double> extra) {
  const size_t d = extra.size();
  Vector without(d, 0.0);
  for (const auto& u : updates) {
    for (size_t j = 0; j < d; ++j) without[j] += u[j];
  }
  Vector with = without;
  for (size_t j = 0; j < d; ++j) with[j] += extra[j];
  double s = 0.0;
  for (size_t j = 0; j < d; ++j) {
    const double diff = without[j] - with[j];
    s += diff * diff;
  }
  return std::sqrt(s);
}

}  // namespace dpfl
