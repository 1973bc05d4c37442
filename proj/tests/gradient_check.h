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

#ifndef DPFL_TESTS_GRADIENT_CHECK_H_
#define DPFL_TESTS_GRADIENT_CHECK_H_

#include <cmath>
#include <span>
#include <vector>

#include "dpfl/model.h"

namespace dpfl::testing {

struct GradientCheck {
  double max_rel_error = 0.0;
  size_t checked = 0;
  size_t failures = 0;
};

// Compares every analytic gradient coordinate against a central finite
// difference with step h. Relative error is |a - fd| / (|fd| + 1e-8).
inline GradientCheck CheckGradients(const SplitModel& model, const Tensor2& x,
                                    std::span<const int> y, double h, double tol) {
  GradientCheck out;
  auto analytic = ComputeLossAndGrad(model, x, y);
  if (!analytic.ok()) {
    out.failures = 1;
    return out;
  }
  Vector grad = analytic->grads.grad_phi;
  grad.insert(grad.end(), analytic->grads.grad_h.begin(), analytic->grads.grad_h.end());
  const Vector theta = FlattenAll(model);
  SplitModel probe = model;
  Vector shifted = theta;
  auto loss_at = [&](const Vector& t) {
    (void)UnflattenAll(t, probe);
    return ComputeLossAndGrad(probe, x, y)->loss;
  };
  for (size_t i = 0; i < theta.size(); ++i) {
    shifted[i] = theta[i] + h;
    const double up = loss_at(shifted);
    shifted[i] = theta[i] - h;
    const double down = loss_at(shifted);
    shifted[i] = theta[i];
    const double fd = (up - down) / (2.0 * h);
    const double rel = std::abs(grad[i] - fd) / (std::abs(fd) + 1e-8);
    out.max_rel_error = std::max(out.max_rel_error, rel);
    ++out.checked;
    if (!(rel < tol)) ++out.failures;
  }
  return out;
}

}  // namespace dpfl::testing

#endif  // DPFL_TESTS_GRADIENT_CHECK_H_
