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

#ifndef DPFL_FEDERATION_H_
#define DPFL_FEDERATION_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/string_view.h"
#include "dpfl/accountant.h"
#include "dpfl/data.h"
#include "dpfl/model.h"
#include "dpfl/optim.h"
#include "dpfl/rng.h"
#include "dpfl/tensor.h"

namespace dpfl {

enum class AlgorithmKind {
  kDpFedAvg,
  kDpFedAvgFt,
  kDpFedSam,
  kDpFedSamFt,
  kCentaur,
  kDp2FedSam,
  kPFedSam,
};

absl::string_view AlgorithmName(AlgorithmKind kind);
// Accepts names with '-' or '_' separators, e.g. "dp2-fedsam".
absl::StatusOr<AlgorithmKind> ParseAlgorithmKind(absl::string_view name);

// Personalized kinds share only the extractor; each client keeps its head.
bool IsPersonalized(AlgorithmKind kind);
bool UsesSam(AlgorithmKind kind);
bool IsFineTuned(AlgorithmKind kind);
// p_fedsam is the non-private reference: Simulator::Create disables clipping
// and noise for it regardless of the configured values.
bool IsPrivate(AlgorithmKind kind);

struct FederationConfig {
  AlgorithmKind algorithm = AlgorithmKind::kDp2FedSam;
  int rounds = 100;
  double sample_ratio = 0.1;
  // +infinity disables clipping.
  double clip = 0.1;
  double sigma = 0.0;
  double delta = 1e-2;
  double sam_rho = 0.1;
  // Local epochs. Full-model kinds train for tau_phi epochs.
  int tau_h = 2;
  int tau_phi = 2;
  // lr_phi drives the extractor (and every parameter of full-model kinds);
  // lr_h drives the personal head.
  double lr_phi = 0.1;
  double lr_h = 0.1;
  double momentum = 0.0;
  double lr_decay = 0.99;
  size_t batch_size = 32;
  int ft_epochs = 1;
  uint64_t seed = 0;
  int workers = 1;
  std::vector<double> rdp_orders = DefaultOrders();

  absl::Status Validate(int num_clients) const;
};

struct ClientShard {
  Dataset train;
  Dataset test;
};

struct ClientState {
  int id = 0;
  // Flattened personal head h_i; unused by full-model kinds.
  Vector head;
  Vector head_velocity;
};

struct RoundUpdate {
  int client_id = 0;
  // Local model minus the broadcast model, before clipping.
  Vector raw_delta;
  double raw_norm = 0.0;
  double clip_alpha = 1.0;
  // Clipped and noised; the only vector that leaves the client.
  Vector noisy_delta;
};

struct RoundReport {
  int round = 0;
  double mean_update_norm = 0.0;
  double std_update_norm = 0.0;
  double alpha_bar = 1.0;
  double alpha_tilde = 0.0;
  // Mean over the cohort of ||local model - broadcast model||^2 at the end of
  // local training.
  double mean_drift = 0.0;
  double epsilon_spent = 0.0;
  double test_acc_mean = 0.0;
  double test_acc_std = 0.0;
};

// Hyperparameters in effect for one round, after learning-rate decay.
struct LocalConfig {
  int tau_h = 0;
  int tau_phi = 0;
  size_t batch_size = 32;
  double lr_phi = 0.0;
  double lr_h = 0.0;
  double momentum = 0.0;
  // 0 selects plain SGD.
  double sam_rho = 0.0;
  double clip = 0.0;
  double sigma = 0.0;
  double noise_denominator = 1.0;
};

LocalConfig LocalConfigForRound(const FederationConfig& cfg, int round, int num_clients);

// Uniform sample of round(ratio * n) distinct ids (at least one), sorted,
// determined by (seed, round).
std::vector<int> SampleClients(int n, double ratio, int round, uint64_t seed);

// One client's work for a personalized kind: tau_h epochs of SGD on the head
// with the extractor fixed, then tau_phi epochs of SAM (sam_rho > 0) or SGD
// on the extractor with the new head fixed, then clip and noise the
// extractor delta. Returns the update and the client's new state.
struct PersonalizedResult {
  RoundUpdate update;
  ClientState state;
};
absl::StatusOr<PersonalizedResult> LocalRoundPersonalized(const SplitModel& global,
                                                          const ClientState& client,
                                                          const Dataset& train,
                                                          const LocalConfig& cfg,
                                                          RngEngine& rng);

// One client's work for a full-model kind: tau_phi epochs of SGD or SAM on
// all parameters, then clip and noise the full delta.
absl::StatusOr<RoundUpdate> LocalRoundBaseline(const SplitModel& global, int client_id,
                                               const Dataset& train,
                                               const LocalConfig& cfg, RngEngine& rng);

// global + sum(noisy_delta) / denom, summing in the given order. nullopt
// when there are no updates (the round is skipped).
std::optional<Vector> Aggregate(std::span<const double> global,
                                std::span<const RoundUpdate> updates, double denom);

// Local SGD on a copy of the full model, for evaluation only.
absl::StatusOr<SplitModel> FineTune(const SplitModel& global, const Dataset& train,
                                    int epochs, const SgdConfig& sgd, size_t batch_size,
                                    RngEngine& rng);

// Runs `fn(i)` for i in [0, n) on up to `workers` threads and returns the
// first error by index.
absl::Status ParallelFor(size_t n, int workers,
                         const std::function<absl::Status(size_t)>& fn);

// Round-by-round driver. The global model is the extractor for personalized
// kinds (whose heads live in the client states) and the whole model
// otherwise.
class Simulator {
 public:
  static absl::StatusOr<Simulator> Create(FederationConfig cfg, SplitModel initial,
                                          std::vector<ClientShard> shards);

  absl::StatusOr<RoundReport> RunRound();

  int round() const { return round_; }
  const FederationConfig& config() const { return cfg_; }
  const SplitModel& model() const { return model_; }
  const std::vector<ClientState>& clients() const { return clients_; }
  const std::vector<RoundUpdate>& last_updates() const { return last_updates_; }
  const PrivacyLedger& ledger() const { return ledger_; }
  // Model seen by client i at evaluation time (personal head swapped in).
  SplitModel ClientModel(int i) const;

  const std::vector<double>& last_client_accuracy() const { return last_acc_; }
  double best_accuracy() const { return best_acc_; }
  int best_round() const { return best_round_; }
  const std::vector<double>& client_accuracy_at_best() const { return acc_at_best_; }
  const std::vector<double>& client_best_accuracy() const { return client_best_; }

 private:
  Simulator(FederationConfig cfg, SplitModel initial, std::vector<ClientShard> shards,
            PrivacyLedger ledger);

  absl::Status Evaluate(int round, const LocalConfig& local);

  FederationConfig cfg_;
  SplitModel model_;
  std::vector<ClientShard> shards_;
  std::vector<ClientState> clients_;
  PrivacyLedger ledger_;
  std::vector<double> round_cost_;
  std::vector<RoundUpdate> last_updates_;
  int round_ = 0;

  std::vector<double> last_acc_;
  double best_acc_ = -1.0;
  int best_round_ = -1;
  std::vector<double> acc_at_best_;
  std::vector<double> client_best_;
};

}  // namespace dpfl

#endif  // DPFL_FEDERATION_H_
