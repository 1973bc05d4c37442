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

#include "dpfl/optim.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "absl/strings/str_cat.h"

namespace dpfl {
namespace {

enum class Scope { kExtractor, kHead, kFull };

Vector Params(const SplitModel& m, Scope scope) {
  switch (scope) {
    case Scope::kExtractor: return FlattenPhi(m);
    case Scope::kHead: return FlattenHead(m);
    case Scope::kFull: return FlattenAll(m);
  }
  return {};
}

absl::Status SetParams(std::span<const double> p, Scope scope, SplitModel& m) {
  switch (scope) {
    case Scope::kExtractor: return UnflattenPhi(p, m);
    case Scope::kHead: return UnflattenHead(p, m);
    case Scope::kFull: return UnflattenAll(p, m);
  }
  return absl::OkStatus();
}

Vector Grad(GradPair&& g, Scope scope) {
  switch (scope) {
    case Scope::kExtractor: return std::move(g.grad_phi);
    case Scope::kHead: return std::move(g.grad_h);
    case Scope::kFull: {
      Vector out = std::move(g.grad_phi);
      out.insert(out.end(), g.grad_h.begin(), g.grad_h.end());
      return out;
    }
  }
  return {};
}

absl::StatusOr<double> SamStep(SplitModel& model, const Tensor2& x,
                               std::span<const int> labels, Scope scope,
                               double rho, const SgdConfig& base,
                               std::span<double> velocity) {
  Vector params = Params(model, scope);
  SplitModel probe = model;
  bool at_start = true;
  auto objective = [&](std::span<const double> point) -> absl::StatusOr<LossGrad> {
    // The first evaluation is at the model's own parameters.
    if (!at_start) {
      if (auto s = SetParams(point, scope, probe); !s.ok()) return s;
    }
    at_start = false;
    auto lg = ComputeLossAndGrad(probe, x, labels);
    if (!lg.ok()) return lg.status();
    return LossGrad{lg->loss, Grad(std::move(lg->grads), scope)};
  };
  auto loss = SamUpdate(params, objective, rho, base.lr, base.momentum, velocity);
  if (!loss.ok()) return loss.status();
  if (auto s = SetParams(params, scope, model); !s.ok()) return s;
  return *loss;
}

}  // namespace

absl::Status SgdConfig::Validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) {
    return absl::InvalidArgumentError(absl::StrCat("learning rate must be finite and > 0, got ", lr));
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    return absl::InvalidArgumentError(absl::StrCat("momentum must be in [0, 1), got ", momentum));
  }
  if (!(decay_per_round > 0.0 && decay_per_round <= 1.0)) {
    return absl::InvalidArgumentError(
        absl::StrCat("lr decay must be in (0, 1], got ", decay_per_round));
  }
  return absl::OkStatus();
}

double SgdConfig::LrAtRound(int round) const {
  return lr * std::pow(decay_per_round, static_cast<double>(round));
}

absl::Status SamConfig::Validate() const {
  if (!(rho >= 0.0) || !std::isfinite(rho)) {
    return absl::InvalidArgumentError(absl::StrCat("SAM radius must be finite and >= 0, got ", rho));
  }
  return base.Validate();
}

absl::Status SgdStep(std::span<double> params, std::span<const double> grad,
                     double lr, double momentum, std::span<double> velocity) {
  if (params.size() != grad.size()) {
    return absl::InvalidArgumentError(
        absl::StrCat("parameter length ", params.size(), " != gradient length ", grad.size()));
  }
  if (momentum == 0.0) {
    for (size_t i = 0; i < params.size(); ++i) params[i] -= lr * grad[i];
    return absl::OkStatus();
  }
  if (velocity.size() != params.size()) {
    return absl::InvalidArgumentError(
        absl::StrCat("velocity length ", velocity.size(), " != parameter length ", params.size()));
  }
  for (size_t i = 0; i < params.size(); ++i) {
    velocity[i] = momentum * velocity[i] + grad[i];
    params[i] -= lr * velocity[i];
  }
  return absl::OkStatus();
}

absl::Status SgdHeadStep(std::span<double> h, std::span<const double> grad_h,
                         const SgdConfig& cfg, std::span<double> velocity) {
  return SgdStep(h, grad_h, cfg.lr, cfg.momentum, velocity);
}

Vector SamPerturbation(std::span<const double> grad, double rho) {
  Vector p(grad.size(), 0.0);
  const double norm = Norm2(grad);
  if (rho == 0.0 || norm < 1e-12) return p;
  const double scale = rho / norm;
  for (size_t i = 0; i < grad.size(); ++i) p[i] = scale * grad[i];
  return p;
}

absl::StatusOr<double> SamUpdate(std::span<double> params, const Objective& objective,
                                 double rho, double lr, double momentum,
                                 std::span<double> velocity) {
  auto first = objective(params);
  if (!first.ok()) return first.status();
  Vector grad = std::move(first->grad);
  if (grad.size() != params.size()) {
    return absl::InvalidArgumentError("objective returned a gradient of the wrong length");
  }
  const Vector perturbation = SamPerturbation(grad, rho);
  const bool moved = std::any_of(perturbation.begin(), perturbation.end(),
                                 [](double v) { return v != 0.0; });
  // With a zero perturbation the second gradient would be evaluated at the
  // same point, so the first one is reused.
  if (moved) {
    Vector shifted(params.begin(), params.end());
    for (size_t i = 0; i < shifted.size(); ++i) shifted[i] += perturbation[i];
    auto second = objective(shifted);
    if (!second.ok()) return second.status();
    grad = std::move(second->grad);
    if (grad.size() != params.size()) {
      return absl::InvalidArgumentError("objective returned a gradient of the wrong length");
    }
  }
  if (auto s = SgdStep(params, grad, lr, momentum, velocity); !s.ok()) return s;
  return first->loss;
}

absl::StatusOr<double> SamExtractorStep(SplitModel& model, const Tensor2& batch_x,
                                        std::span<const int> labels,
                                        const SamConfig& cfg,
                                        std::span<double> velocity) {
  return SamStep(model, batch_x, labels, Scope::kExtractor, cfg.rho, cfg.base, velocity);
}

absl::StatusOr<double> SamFullStep(SplitModel& model, const Tensor2& batch_x,
                                   std::span<const int> labels,
                                   const SamConfig& cfg, std::span<double> velocity) {
  return SamStep(model, batch_x, labels, Scope::kFull, cfg.rho, cfg.base, velocity);
}

absl::StatusOr<double> SgdExtractorStep(SplitModel& model, const Tensor2& batch_x,
                                        std::span<const int> labels,
                                        const SgdConfig& cfg,
                                        std::span<double> velocity) {
  return SamStep(model, batch_x, labels, Scope::kExtractor, 0.0, cfg, velocity);
}

absl::StatusOr<double> SgdHeadOnlyStep(SplitModel& model, const Tensor2& batch_x,
                                       std::span<const int> labels,
                                       const SgdConfig& cfg,
                                       std::span<double> velocity) {
  return SamStep(model, batch_x, labels, Scope::kHead, 0.0, cfg, velocity);
}

absl::StatusOr<double> SgdFullStep(SplitModel& model, const Tensor2& batch_x,
                                   std::span<const int> labels,
                                   const SgdConfig& cfg, std::span<double> velocity) {
  return SamStep(model, batch_x, labels, Scope::kFull, 0.0, cfg, velocity);
}

std::vector<std::vector<size_t>> EpochBatches(size_t n, size_t batch_size,
                                              RngEngine& rng) {
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<size_t>> batches;
  if (batch_size == 0) batch_size = n;
  for (size_t start = 0; start < n; start += batch_size) {
    const size_t end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + start, order.begin() + end);
  }
  return batches;
}

}  // namespace dpfl
