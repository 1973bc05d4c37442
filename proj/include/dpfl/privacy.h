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

#ifndef DPFL_PRIVACY_H_
#define DPFL_PRIVACY_H_

#include <span>
#include <vector>

#include "absl/status/statusor.h"
#include "dpfl/rng.h"
#include "dpfl/tensor.h"

namespace dpfl {

struct ClipResult {
  Vector clipped;
  // min(1, C / pre_norm); 1 when pre_norm is zero.
  double alpha = 1.0;
  double pre_norm = 0.0;
};

// Scales `delta` by min(1, C / ||delta||). C may be +infinity (no clipping).
absl::StatusOr<ClipResult> ClipUpdate(std::span<const double> delta, double clip);

// Adds i.i.d. N(0, C^2 sigma^2 / denom) to every coordinate, where denom is
// the expected cohort size rN. After the server sums denom such updates and
// divides by denom, the residual noise has per-coordinate variance
// C^2 sigma^2 / denom^2. sigma == 0 returns the input unchanged and draws
// nothing.
absl::StatusOr<Vector> AddGaussianNoise(std::span<const double> clipped, double clip,
                                        double sigma, double denom, RngEngine& rng);

// ||sum(updates) - sum(updates + {extra})||_2: the change in the aggregate
// when one more clipped client joins. Bounded by C when `extra` is clipped.
double SumSensitivityCheck(std::span<const Vector> updates, std::span<const double> extra);

}  // namespace dpfl

#endif  // DPFL_PRIVACY_H_
