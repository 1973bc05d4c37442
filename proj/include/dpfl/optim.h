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

#ifndef DPFL_OPTIM_H_
#define DPFL_OPTIM_H_

#include <functional>
#include <span>
#include <vector>

#include "absl/status/status.h"
#include "dpfl/model.h"
#include "dpfl/rng.h"
#include "dpfl/tensor.h"

namespace dpfl {

struct SgdConfig {
  double lr = 0.01;
  double momentum = 0.0;
  double decay_per_round = 1.0;

  absl::Status Validate() const;
  // lr * decay_per_round^round.
  double LrAtRound(int round) const;
};

struct SamConfig {
  // Radius of the ascent perturbation.
  double rho = 0.0;
  SgdConfig base;

  absl::Status Validate() const;
};

// Heavy-ball step: velocity = momentum * velocity + grad, then
// params -= lr * velocity. With momentum == 0 the velocity is left untouched
// and the step is exactly params -= lr * grad. `velocity` may be empty when
// momentum is zero.
absl::Status SgdStep(std::span<double> params, std::span<const double> grad,
                     double lr, double momentum, std::span<double> velocity);

// The personal-head update: one SgdStep on the flattened head.
absl::Status SgdHeadStep(std::span<double> h, std::span<const double> grad_h,
                         const SgdConfig& cfg, std::span<double> velocity);

// rho * grad / ||grad||, or all zeros when ||grad|| < 1e-12 or rho == 0.
Vector SamPerturbation(std::span<const double> grad, double rho);

// One SAM step on the extractor with the head held fixed: the extractor
// gradient is taken at phi + SamPerturbation(grad(phi)), and phi moves by
// SgdStep along it. Returns the loss at the unperturbed point.
struct LossGrad {
  double loss = 0.0;
  Vector grad;
};
using Objective = std::function<absl::StatusOr<LossGrad>(std::span<const double>)>;

// Generic SAM step on a flat parameter vector: g = grad at params,
// params -= lr * grad at (params + SamPerturbation(g, rho)), with momentum as
// in SgdStep. When the perturbation is zero the first gradient is reused,
// so rho == 0 is exactly one SgdStep. Returns the loss at the starting point.
absl::StatusOr<double> SamUpdate(std::span<double> params, const Objective& objective,
                                 double rho, double lr, double momentum,
                                 std::span<double> velocity);

absl::StatusOr<double> SamExtractorStep(SplitModel& model, const Tensor2& batch_x,
                                        std::span<const int> labels,
                                        const SamConfig& cfg,
                                        std::span<double> velocity);

// Same as SamExtractorStep but perturbs and updates all parameters jointly,
// using the concatenated (phi, h) gradient. Used by full-model baselines.
absl::StatusOr<double> SamFullStep(SplitModel& model, const Tensor2& batch_x,
                                   std::span<const int> labels,
                                   const SamConfig& cfg, std::span<double> velocity);

// Plain SGD on the extractor only (head fixed).
absl::StatusOr<double> SgdExtractorStep(SplitModel& model, const Tensor2& batch_x,
                                        std::span<const int> labels,
                                        const SgdConfig& cfg,
                                        std::span<double> velocity);

// Plain SGD on the head only (extractor fixed).
absl::StatusOr<double> SgdHeadOnlyStep(SplitModel& model, const Tensor2& batch_x,
                                       std::span<const int> labels,
                                       const SgdConfig& cfg,
                                       std::span<double> velocity);

// Plain SGD on all parameters.
absl::StatusOr<double> SgdFullStep(SplitModel& model, const Tensor2& batch_x,
                                   std::span<const int> labels,
                                   const SgdConfig& cfg, std::span<double> velocity);

// Mini-batch schedule for one epoch: a fresh permutation of [0, n) cut into
// ceil(n / batch_size) consecutive batches (the last may be short).
std::vector<std::vector<size_t>> EpochBatches(size_t n, size_t batch_size,
                                              RngEngine& rng);

}  // namespace dpfl

#endif  // DPFL_OPTIM_H_
