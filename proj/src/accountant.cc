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

#include "dpfl/accountant.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "absl/strings/str_cat.h"

namespace dpfl {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Orders above this are only served by the closed form.
constexpr int kMaxSeriesOrder = 100000;

double LogBinomial(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// Neumaier-compensated sum.
class CompensatedSum {
 public:
  void Add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double Total() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

nlohmann::json FiniteOrNull(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

}  // namespace

double RdpGaussian(double sigma, double order) {
  if (sigma == 0.0) return kInf;
  return order / (2.0 * sigma * sigma);
}

double RdpSubsampledSeries(double sigma, double ratio, int order) {
  if (ratio == 0.0) return 0.0;
  if (sigma == 0.0 || order < 2) return kInf;
  const double log_r = std::log(ratio);
  std::vector<double> log_terms;
  log_terms.reserve(order - 1);

  const double g2 = RdpGaussian(sigma, 2.0);
  const double log_min2 = std::min(std::log(4.0) + std::log(std::expm1(g2)),
                                   std::log(2.0) + g2);
  log_terms.push_back(2.0 * log_r + LogBinomial(order, 2) + log_min2);
  for (int l = 3; l <= order; ++l) {
    log_terms.push_back(std::log(2.0) + l * log_r + LogBinomial(order, l) +
                        (l - 1.0) * RdpGaussian(sigma, l));
  }

  const double max_term = *std::max_element(log_terms.begin(), log_terms.end());
  double log_total;
  CompensatedSum sum;
  if (max_term <= 0.0) {
    for (double t : log_terms) sum.Add(std::exp(t));
    log_total = std::log1p(sum.Total());
  } else {
    sum.Add(std::exp(-max_term));
    for (double t : log_terms) sum.Add(std::exp(t - max_term));
    log_total = max_term + std::log(sum.Total());
  }
  const double rho = log_total / (order - 1.0);
  return std::isfinite(rho) ? rho : kInf;
}

double RdpSubsampledSimplified(double sigma, double ratio, double order) {
  if (ratio == 0.0) return 0.0;
  if (sigma == 0.0) return kInf;
  return 3.5 * ratio * ratio * order / (sigma * sigma);
}

bool SimplifiedBoundApplies(double sigma, double ratio, double order, double sensitivity) {
  const double var = sigma * sigma;
  if (!(var >= 0.7)) return false;
  const double log_term = std::log(1.0 / (ratio * order * (1.0 + var)));
  const double limit = (2.0 / 3.0) * var * sensitivity * sensitivity * log_term + 1.0;
  return order <= limit;
}

double RdpSubsampled(double sigma, double ratio, double order, double sensitivity) {
  if (ratio == 0.0) return 0.0;
  if (sigma == 0.0) return kInf;
  double best = kInf;
  if (order >= 2.0 && order == std::floor(order) && order <= kMaxSeriesOrder) {
    best = RdpSubsampledSeries(sigma, ratio, static_cast<int>(order));
  }
  if (SimplifiedBoundApplies(sigma, ratio, order, sensitivity)) {
    best = std::min(best, RdpSubsampledSimplified(sigma, ratio, order));
  }
  return best;
}

std::vector<double> DefaultOrders() {
  std::vector<double> orders;
  for (int a = 2; a <= 64; ++a) orders.push_back(a);
  orders.push_back(128);
  orders.push_back(256);
  return orders;
}

absl::StatusOr<PrivacyLedger> PrivacyLedger::Create(std::vector<double> orders,
                                                    LedgerParams params) {
  if (orders.empty()) return absl::InvalidArgumentError("order grid is empty");
  for (double a : orders) {
    if (!(a > 1.0) || !std::isfinite(a)) {
      return absl::InvalidArgumentError(absl::StrCat("RDP orders must be > 1, got ", a));
    }
  }
  PrivacyLedger ledger;
  ledger.cumulative_rho_.assign(orders.size(), 0.0);
  ledger.orders_ = std::move(orders);
  ledger.params_ = params;
  return ledger;
}

absl::Status PrivacyLedger::Compose(std::span<const double> per_round_rho) {
  if (per_round_rho.size() != orders_.size()) {
    return absl::InvalidArgumentError(
        absl::StrCat("per-round cost has ", per_round_rho.size(),
                     " orders, ledger has ", orders_.size()));
  }
  for (double r : per_round_rho) {
    if (!(r >= 0.0)) {
      return absl::InvalidArgumentError(absl::StrCat("negative or NaN RDP cost ", r));
    }
  }
  for (size_t i = 0; i < orders_.size(); ++i) cumulative_rho_[i] += per_round_rho[i];
  ++rounds_;
  return absl::OkStatus();
}

std::vector<double> PrivacyLedger::RoundCost() const {
  std::vector<double> cost(orders_.size());
  for (size_t i = 0; i < orders_.size(); ++i) {
    cost[i] = RdpSubsampled(params_.noise_multiplier, params_.sampling_ratio, orders_[i],
                            params_.clip);
  }
  return cost;
}

absl::StatusOr<EpsilonResult> PrivacyLedger::ToEpsilon(double delta) const {
  if (!(delta > 0.0 && delta < 1.0)) {
    return absl::InvalidArgumentError(absl::StrCat("delta must be in (0, 1), got ", delta));
  }
  // Nothing has been released yet.
  if (rounds_ == 0) return EpsilonResult{0.0, orders_.front()};
  EpsilonResult best{kInf, orders_.front()};
  const double log_inv_delta = std::log(1.0 / delta);
  for (size_t i = 0; i < orders_.size(); ++i) {
    if (!std::isfinite(cumulative_rho_[i])) continue;
    const double eps = cumulative_rho_[i] + log_inv_delta / (orders_[i] - 1.0);
    if (eps < best.epsilon) best = {eps, orders_[i]};
  }
  return best;
}

nlohmann::json PrivacyLedger::ToJson() const {
  nlohmann::json j;
  j["orders"] = orders_;
  auto rho = nlohmann::json::array();
  for (double r : cumulative_rho_) rho.push_back(FiniteOrNull(r));
  j["cumulative_rho"] = std::move(rho);
  j["rounds"] = rounds_;
  j["sigma"] = params_.noise_multiplier;
  j["ratio"] = params_.sampling_ratio;
  j["clip"] = FiniteOrNull(params_.clip);
  j["delta"] = params_.delta;
  j["noise_denominator"] = params_.noise_denominator;
  j["noise_denominator_kind"] = "expected_cohort_size";
  if (auto eps = ToEpsilon(params_.delta); eps.ok()) {
    j["epsilon_at_delta"] = FiniteOrNull(eps->epsilon);
    j["best_order"] = eps->best_order;
  } else {
    j["epsilon_at_delta"] = nullptr;
    j["best_order"] = nullptr;
  }
  return j;
}

absl::StatusOr<Calibration> CalibrateSigma(double epsilon, double delta, int rounds,
                                           double ratio) {
  if (!(delta > 0.0 && delta < 1.0)) {
    return absl::InvalidArgumentError(absl::StrCat("delta must be in (0, 1), got ", delta));
  }
  if (!(epsilon > 0.0)) {
    return absl::InvalidArgumentError(absl::StrCat("epsilon must be > 0, got ", epsilon));
  }
  const double log_inv_delta = std::log(1.0 / delta);
  if (!(epsilon < 2.0 * log_inv_delta)) {
    return absl::OutOfRangeError(absl::StrCat(
        "epsilon ", epsilon, " is outside the calibrated regime epsilon < 2 log(1/delta) = ",
        2.0 * log_inv_delta));
  }
  if (rounds < 1) return absl::InvalidArgumentError("rounds must be >= 1");
  if (!(ratio >= 0.0 && ratio <= 1.0)) {
    return absl::InvalidArgumentError(absl::StrCat("sampling ratio must be in [0, 1], got ", ratio));
  }
  Calibration c;
  const double var = 7.0 * ratio * ratio * rounds * (epsilon + 2.0 * log_inv_delta) /
                     (epsilon * epsilon);
  c.sigma = std::sqrt(var);
  c.order = 1.0 + 2.0 * log_inv_delta / epsilon;
  c.sigma_regime_ok = var >= 0.7;
  return c;
}

}  // namespace dpfl
