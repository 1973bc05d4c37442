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

#ifndef DPFL_ACCOUNTANT_H_
#define DPFL_ACCOUNTANT_H_

#include <span>
#include <vector>

#include "absl/status/statusor.h"
#include "json.hpp"

namespace dpfl {

// Renyi-DP accounting for client-level DP with subsampled Gaussian noise.
//
// All costs are in nats. An order whose cost cannot be bounded (diverging
// series, zero noise) reports +infinity and is skipped when converting to
// (epsilon, delta).

// Gaussian mechanism with noise multiplier sigma: order / (2 sigma^2).
// sigma == 0 yields +infinity.
double RdpGaussian(double sigma, double order);

// Upper bound for the Gaussian mechanism applied to a cohort subsampled
// without replacement at `ratio`, for integer order >= 2:
//
//   1/(order-1) * log(1 + r^2 C(order,2) min(4(e^{g(2)}-1), 2e^{g(2)})
//                       + sum_{l=3}^{order} 2 r^l C(order,l) e^{(l-1) g(l)})
//
// with g(l) = RdpGaussian(sigma, l). Evaluated in log space.
double RdpSubsampledSeries(double sigma, double ratio, int order);

// The closed-form bound 3.5 r^2 order / sigma^2 (no validity check).
double RdpSubsampledSimplified(double sigma, double ratio, double order);

// Whether the closed-form bound holds: sigma^2 >= 0.7 and
// order <= (2/3) sigma^2 s^2 log(1 / (r order (1 + sigma^2))) + 1, where s is
// the l2 sensitivity.
bool SimplifiedBoundApplies(double sigma, double ratio, double order, double sensitivity);

// min(series, closed form when it applies). Non-integer orders only have the
// closed form; +infinity when neither is available.
double RdpSubsampled(double sigma, double ratio, double order, double sensitivity);

// Integers 2..64 plus 128 and 256.
std::vector<double> DefaultOrders();

struct LedgerParams {
  double sampling_ratio = 0.0;
  double noise_multiplier = 0.0;
  double clip = 0.0;
  double delta = 0.0;
  // Expected cohort size rN used as the noise-variance denominator.
  double noise_denominator = 1.0;
};

struct EpsilonResult {
  double epsilon = 0.0;
  double best_order = 0.0;
};

// Accumulated RDP over a fixed grid of orders.
class PrivacyLedger {
 public:
  static absl::StatusOr<PrivacyLedger> Create(std::vector<double> orders,
                                              LedgerParams params);

  const std::vector<double>& orders() const { return orders_; }
  const std::vector<double>& cumulative_rho() const { return cumulative_rho_; }
  int rounds() const { return rounds_; }
  const LedgerParams& params() const { return params_; }

  // Adds one round's cost, order by order.
  absl::Status Compose(std::span<const double> per_round_rho);

  // Cost of one round of the subsampled Gaussian mechanism described by
  // params(), at every order of the grid.
  std::vector<double> RoundCost() const;

  // min over orders of rho(a) + log(1/delta) / (a - 1); zero before the
  // first round.
  absl::StatusOr<EpsilonResult> ToEpsilon(double delta) const;

  // {orders, cumulative_rho, rounds, sigma, ratio, clip, delta,
  //  epsilon_at_delta, best_order, noise_denominator, ...}. Non-finite
  // numbers are written as null.
  nlohmann::json ToJson() const;

 private:
  PrivacyLedger() = default;

  std::vector<double> orders_;
  std::vector<double> cumulative_rho_;
  int rounds_ = 0;
  LedgerParams params_;
};

struct Calibration {
  double sigma = 0.0;
  // The single order 1 + 2 log(1/delta) / epsilon the closed form is tuned to.
  double order = 0.0;
  // sigma^2 >= 0.7, required by the closed-form subsampling bound.
  bool sigma_regime_ok = false;
};

// Smallest sigma for which T rounds of the closed-form per-round cost,
// evaluated at the single order above, reach (epsilon, delta):
// sigma^2 = 7 r^2 T (epsilon + 2 log(1/delta)) / epsilon^2.
absl::StatusOr<Calibration> CalibrateSigma(double epsilon, double delta, int rounds,
                                           double ratio);

}  // namespace dpfl

#endif  // DPFL_ACCOUNTANT_H_
