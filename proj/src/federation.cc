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

#include "dpfl/federation.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iterator>
#include <limits>
#include <mutex>
#include <numeric>
#include <string>
#include <thread>
#include <utility>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_replace.h"
#include "dpfl/privacy.h"

namespace dpfl {
namespace {

struct KindInfo {
  AlgorithmKind kind;
  absl::string_view name;
  bool personalized;
  bool sam;
  bool fine_tuned;
};

constexpr KindInfo kKinds[] = {
    {AlgorithmKind::kDpFedAvg, "dp_fedavg", false, false, false},
    {AlgorithmKind::kDpFedAvgFt, "dp_fedavg_ft", false, false, true},
    {AlgorithmKind::kDpFedSam, "dp_fedsam", false, true, false},
    {AlgorithmKind::kDpFedSamFt, "dp_fedsam_ft", false, true, true},
    {AlgorithmKind::kCentaur, "centaur", true, false, false},
    {AlgorithmKind::kDp2FedSam, "dp2_fedsam", true, true, false},
    {AlgorithmKind::kPFedSam, "p_fedsam", true, true, false},
};

const KindInfo& Info(AlgorithmKind kind) {
  for (const auto& k : kKinds) {
    if (k.kind == kind) return k;
  }
  return kKinds[0];
}

double Mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Population standard deviation.
double StdDev(std::span<const double> v) {
  if (v.empty()) return 0.0;
  const double m = Mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

absl::Status WithContext(const absl::Status& s, absl::string_view context) {
  if (s.ok()) return s;
  return absl::Status(s.code(), absl::StrCat(context, ": ", s.message()));
}

// Clips the raw delta and adds noise, filling the privacy fields of `update`.
absl::Status Privatize(const LocalConfig& cfg, RngEngine& rng, RoundUpdate& update) {
  auto clipped = ClipUpdate(update.raw_delta, cfg.clip);
  if (!clipped.ok()) return clipped.status();
  update.raw_norm = clipped->pre_norm;
  update.clip_alpha = clipped->alpha;
  auto noisy = AddGaussianNoise(clipped->clipped, cfg.clip, cfg.sigma,
                                cfg.noise_denominator, rng);
  if (!noisy.ok()) return noisy.status();
  update.noisy_delta = *std::move(noisy);
  return absl::OkStatus();
}

Vector Difference(std::span<const double> a, std::span<const double> b) {
  Vector d(a.size());
  for (size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return d;
}

}  // namespace

absl::string_view AlgorithmName(AlgorithmKind kind) { return Info(kind).name; }

absl::StatusOr<AlgorithmKind> ParseAlgorithmKind(absl::string_view name) {
  const std::string normalized = absl::StrReplaceAll(name, {{"-", "_"}});
  for (const auto& k : kKinds) {
    if (k.name == normalized) return k.kind;
  }
  return absl::InvalidArgumentError(absl::StrCat("unknown algorithm '", name, "'"));
}

bool IsPersonalized(AlgorithmKind kind) { return Info(kind).personalized; }
bool UsesSam(AlgorithmKind kind) { return Info(kind).sam; }
bool IsFineTuned(AlgorithmKind kind) { return Info(kind).fine_tuned; }
bool IsPrivate(AlgorithmKind kind) { return kind != AlgorithmKind::kPFedSam; }

absl::Status FederationConfig::Validate(int num_clients) const {
  std::vector<std::string> errors;
  if (num_clients < 1) errors.push_back("need at least one client");
  if (rounds < 0) errors.push_back("rounds must be >= 0");
  if (!(sample_ratio > 0.0 && sample_ratio <= 1.0)) {
    errors.push_back(absl::StrCat("sample ratio must be in (0, 1], got ", sample_ratio));
  } else if (sample_ratio * num_clients < 1.0) {
    errors.push_back(absl::StrCat("expected cohort size ", sample_ratio * num_clients,
                                  " is below one client"));
  }
  if (!(clip > 0.0)) errors.push_back(absl::StrCat("clip must be > 0, got ", clip));
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    errors.push_back(absl::StrCat("sigma must be finite and >= 0, got ", sigma));
  }
  if (sigma > 0.0 && std::isinf(clip)) {
    errors.push_back("noise requires a finite clip threshold");
  }
  if (!(delta > 0.0 && delta < 1.0)) errors.push_back(absl::StrCat("delta must be in (0, 1), got ", delta));
  if (!(sam_rho >= 0.0)) errors.push_back(absl::StrCat("sam rho must be >= 0, got ", sam_rho));
  if (tau_h < 0 || tau_phi < 0) errors.push_back("local epochs must be >= 0");
  for (auto [name, lr] : {std::pair{"lr_phi", lr_phi}, std::pair{"lr_h", lr_h}}) {
    if (!(lr > 0.0) || !std::isfinite(lr)) errors.push_back(absl::StrCat(name, " must be > 0, got ", lr));
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) errors.push_back(absl::StrCat("momentum must be in [0, 1), got ", momentum));
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) errors.push_back(absl::StrCat("lr decay must be in (0, 1], got ", lr_decay));
  if (batch_size < 1) errors.push_back("batch size must be >= 1");
  if (ft_epochs < 0) errors.push_back("fine-tuning epochs must be >= 0");
  if (workers < 1) errors.push_back("workers must be >= 1");
  if (rdp_orders.empty()) errors.push_back("RDP order grid is empty");
  if (errors.empty()) return absl::OkStatus();
  std::string msg = "invalid federation config:";
  for (const auto& e : errors) absl::StrAppend(&msg, "\n  ", e);
  return absl::InvalidArgumentError(msg);
}

LocalConfig LocalConfigForRound(const FederationConfig& cfg, int round, int num_clients) {
  const double decay = std::pow(cfg.lr_decay, static_cast<double>(round));
  LocalConfig local;
  local.tau_h = cfg.tau_h;
  local.tau_phi = cfg.tau_phi;
  local.batch_size = cfg.batch_size;
  local.lr_phi = cfg.lr_phi * decay;
  local.lr_h = cfg.lr_h * decay;
  local.momentum = cfg.momentum;
  local.sam_rho = UsesSam(cfg.algorithm) ? cfg.sam_rho : 0.0;
  local.clip = cfg.clip;
  local.sigma = cfg.sigma;
  local.noise_denominator = cfg.sample_ratio * num_clients;
  return local;
}

std::vector<int> SampleClients(int n, double ratio, int round, uint64_t seed) {
  const long target = std::llround(ratio * n);
  const size_t m = static_cast<size_t>(std::clamp<long>(target, 1, n));
  std::vector<int> all(n);
  std::iota(all.begin(), all.end(), 0);
  std::vector<int> picked;
  picked.reserve(m);
  RngEngine rng = MakeStream(seed, StreamTag::kClientSampling,
                             {static_cast<uint64_t>(round)});
  std::sample(all.begin(), all.end(), std::back_inserter(picked), m, rng);
  return picked;
}

absl::StatusOr<PersonalizedResult> LocalRoundPersonalized(const SplitModel& global,
                                                          const ClientState& client,
                                                          const Dataset& train,
                                                          const LocalConfig& cfg,
                                                          RngEngine& rng) {
  SplitModel local = global;
  if (auto s = UnflattenHead(client.head, local); !s.ok()) return s;
  const Vector phi_start = FlattenPhi(global);

  PersonalizedResult out;
  out.state = client;
  if (cfg.momentum > 0.0 && out.state.head_velocity.size() != client.head.size()) {
    out.state.head_velocity.assign(client.head.size(), 0.0);
  }

  const SgdConfig head_sgd{cfg.lr_h, cfg.momentum, 1.0};
  for (int epoch = 0; epoch < cfg.tau_h; ++epoch) {
    for (const auto& batch : EpochBatches(train.size(), cfg.batch_size, rng)) {
      const Dataset b = train.Subset(batch);
      auto loss = SgdHeadOnlyStep(local, b.features, b.labels, head_sgd,
                                  out.state.head_velocity);
      if (!loss.ok()) return loss.status();
    }
  }

  Vector phi_velocity(cfg.momentum > 0.0 ? phi_start.size() : 0, 0.0);
  const SamConfig sam{cfg.sam_rho, SgdConfig{cfg.lr_phi, cfg.momentum, 1.0}};
  for (int epoch = 0; epoch < cfg.tau_phi; ++epoch) {
    for (const auto& batch : EpochBatches(train.size(), cfg.batch_size, rng)) {
      const Dataset b = train.Subset(batch);
      auto loss = SamExtractorStep(local, b.features, b.labels, sam, phi_velocity);
      if (!loss.ok()) return loss.status();
    }
  }

  out.update.client_id = client.id;
  out.update.raw_delta = Difference(FlattenPhi(local), phi_start);
  if (auto s = Privatize(cfg, rng, out.update); !s.ok()) return s;
  out.state.head = FlattenHead(local);
  return out;
}

absl::StatusOr<RoundUpdate> LocalRoundBaseline(const SplitModel& global, int client_id,
                                               const Dataset& train,
                                               const LocalConfig& cfg, RngEngine& rng) {
  SplitModel local = global;
  const Vector theta_start = FlattenAll(global);
  Vector velocity(cfg.momentum > 0.0 ? theta_start.size() : 0, 0.0);
  const SamConfig sam{cfg.sam_rho, SgdConfig{cfg.lr_phi, cfg.momentum, 1.0}};
  for (int epoch = 0; epoch < cfg.tau_phi; ++epoch) {
    for (const auto& batch : EpochBatches(train.size(), cfg.batch_size, rng)) {
      const Dataset b = train.Subset(batch);
      auto loss = SamFullStep(local, b.features, b.labels, sam, velocity);
      if (!loss.ok()) return loss.status();
    }
  }
  RoundUpdate update;
  update.client_id = client_id;
  update.raw_delta = Difference(FlattenAll(local), theta_start);
  if (auto s = Privatize(cfg, rng, update); !s.ok()) return s;
  return update;
}

std::optional<Vector> Aggregate(std::span<const double> global,
                                std::span<const RoundUpdate> updates, double denom) {
  if (updates.empty()) return std::nullopt;
  Vector sum(global.size(), 0.0);
  for (const auto& u : updates) {
    for (size_t j = 0; j < sum.size(); ++j) sum[j] += u.noisy_delta[j];
  }
  Vector out(global.begin(), global.end());
  for (size_t j = 0; j < out.size(); ++j) out[j] += sum[j] / denom;
  return out;
}

absl::StatusOr<SplitModel> FineTune(const SplitModel& global, const Dataset& train,
                                    int epochs, const SgdConfig& sgd, size_t batch_size,
                                    RngEngine& rng) {
  SplitModel local = global;
  if (epochs <= 0 || sgd.lr == 0.0) return local;
  Vector velocity(sgd.momentum > 0.0 ? local.extractor_size() + local.head_size() : 0, 0.0);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (const auto& batch : EpochBatches(train.size(), batch_size, rng)) {
      const Dataset b = train.Subset(batch);
      auto loss = SgdFullStep(local, b.features, b.labels, sgd, velocity);
      if (!loss.ok()) return loss.status();
    }
  }
  return local;
}

absl::Status ParallelFor(size_t n, int workers,
                         const std::function<absl::Status(size_t)>& fn) {
  std::vector<absl::Status> status(n);
  const size_t threads = std::min<size_t>(std::max(workers, 1), n);
  if (threads <= 1) {
    for (size_t i = 0; i < n; ++i) status[i] = fn(i);
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (size_t i = next++; i < n; i = next++) status[i] = fn(i);
      });
    }
  }
  for (const auto& s : status) {
    if (!s.ok()) return s;
  }
  return absl::OkStatus();
}

Simulator::Simulator(FederationConfig cfg, SplitModel initial,
                     std::vector<ClientShard> shards, PrivacyLedger ledger)
    : cfg_(std::move(cfg)),
      model_(std::move(initial)),
      shards_(std::move(shards)),
      ledger_(std::move(ledger)) {
  const Vector head = FlattenHead(model_);
  clients_.resize(shards_.size());
  for (size_t i = 0; i < clients_.size(); ++i) {
    clients_[i].id = static_cast<int>(i);
    if (IsPersonalized(cfg_.algorithm)) {
      clients_[i].head = head;
      if (cfg_.momentum > 0.0) clients_[i].head_velocity.assign(head.size(), 0.0);
    }
  }
  round_cost_ = ledger_.RoundCost();
  client_best_.assign(clients_.size(), 0.0);
}

absl::StatusOr<Simulator> Simulator::Create(FederationConfig cfg, SplitModel initial,
                                            std::vector<ClientShard> shards) {
  if (!IsPrivate(cfg.algorithm)) {
    cfg.clip = std::numeric_limits<double>::infinity();
    cfg.sigma = 0.0;
  }
  const int n = static_cast<int>(shards.size());
  if (auto s = cfg.Validate(n); !s.ok()) return s;
  if (auto s = initial.Validate(); !s.ok()) return s;
  for (int i = 0; i < n; ++i) {
    const auto& shard = shards[i];
    if (shard.train.size() == 0 || shard.test.size() == 0) {
      return absl::FailedPreconditionError(
          absl::StrCat("client ", i, " has an empty train or test split"));
    }
    if (shard.train.dim() != initial.input_dim() || shard.test.dim() != initial.input_dim()) {
      return absl::InvalidArgumentError(
          absl::StrCat("client ", i, " features do not match the model input"));
    }
  }
  LedgerParams params;
  params.sampling_ratio = cfg.sample_ratio;
  params.noise_multiplier = cfg.sigma;
  params.clip = cfg.clip;
  params.delta = cfg.delta;
  params.noise_denominator = cfg.sample_ratio * n;
  auto ledger = PrivacyLedger::Create(cfg.rdp_orders, params);
  if (!ledger.ok()) return ledger.status();
  return Simulator(std::move(cfg), std::move(initial), std::move(shards),
                   *std::move(ledger));
}

SplitModel Simulator::ClientModel(int i) const {
  SplitModel m = model_;
  if (IsPersonalized(cfg_.algorithm)) {
    UnflattenHead(clients_[i].head, m).IgnoreError();
  }
  return m;
}

absl::StatusOr<RoundReport> Simulator::RunRound() {
  const int t = round_;
  const int n = static_cast<int>(clients_.size());
  const LocalConfig local = LocalConfigForRound(cfg_, t, n);
  const bool personalized = IsPersonalized(cfg_.algorithm);
  const std::vector<int> cohort = SampleClients(n, cfg_.sample_ratio, t, cfg_.seed);

  std::vector<RoundUpdate> updates(cohort.size());
  std::vector<ClientState> new_states(personalized ? cohort.size() : 0);
  auto status = ParallelFor(cohort.size(), cfg_.workers, [&](size_t k) -> absl::Status {
    const int id = cohort[k];
    RngEngine rng = MakeStream(cfg_.seed, StreamTag::kClientRound,
                               {static_cast<uint64_t>(id), static_cast<uint64_t>(t)});
    if (personalized) {
      auto r = LocalRoundPersonalized(model_, clients_[id], shards_[id].train, local, rng);
      if (!r.ok()) return WithContext(r.status(), absl::StrCat("client ", id));
      updates[k] = std::move(r->update);
      new_states[k] = std::move(r->state);
    } else {
      auto r = LocalRoundBaseline(model_, id, shards_[id].train, local, rng);
      if (!r.ok()) return WithContext(r.status(), absl::StrCat("client ", id));
      updates[k] = *std::move(r);
    }
    return absl::OkStatus();
  });
  if (!status.ok()) return WithContext(status, absl::StrCat("round ", t));

  for (size_t k = 0; k < new_states.size(); ++k) clients_[cohort[k]] = std::move(new_states[k]);

  const Vector global = personalized ? FlattenPhi(model_) : FlattenAll(model_);
  if (auto next = Aggregate(global, updates, local.noise_denominator)) {
    auto s = personalized ? UnflattenPhi(*next, model_) : UnflattenAll(*next, model_);
    if (!s.ok()) return WithContext(s, absl::StrCat("round ", t));
  }
  if (auto s = ledger_.Compose(round_cost_); !s.ok()) return s;

  RoundReport report;
  report.round = t;
  std::vector<double> norms, alphas, drifts;
  for (const auto& u : updates) {
    norms.push_back(u.raw_norm);
    alphas.push_back(u.clip_alpha);
    drifts.push_back(u.raw_norm * u.raw_norm);
  }
  report.mean_update_norm = Mean(norms);
  report.std_update_norm = StdDev(norms);
  report.alpha_bar = Mean(alphas);
  double mad = 0.0;
  for (double a : alphas) mad += std::abs(a - report.alpha_bar);
  report.alpha_tilde = alphas.empty() ? 0.0 : mad / static_cast<double>(alphas.size());
  report.mean_drift = Mean(drifts);
  auto eps = ledger_.ToEpsilon(cfg_.delta);
  if (!eps.ok()) return eps.status();
  report.epsilon_spent = eps->epsilon;

  if (auto s = Evaluate(t, local); !s.ok()) return WithContext(s, absl::StrCat("round ", t));
  report.test_acc_mean = Mean(last_acc_);
  report.test_acc_std = StdDev(last_acc_);
  if (report.test_acc_mean > best_acc_) {
    best_acc_ = report.test_acc_mean;
    best_round_ = t;
    acc_at_best_ = last_acc_;
  }
  for (size_t i = 0; i < last_acc_.size(); ++i) {
    client_best_[i] = std::max(client_best_[i], last_acc_[i]);
  }

  last_updates_ = std::move(updates);
  ++round_;
  return report;
}

absl::Status Simulator::Evaluate(int round, const LocalConfig& local) {
  const int n = static_cast<int>(clients_.size());
  last_acc_.assign(n, 0.0);
  const SgdConfig ft_sgd{local.lr_phi, local.momentum, 1.0};
  return ParallelFor(n, cfg_.workers, [&](size_t i) -> absl::Status {
    SplitModel m = ClientModel(static_cast<int>(i));
    if (IsFineTuned(cfg_.algorithm)) {
      RngEngine rng = MakeStream(cfg_.seed, StreamTag::kFineTune,
                                 {static_cast<uint64_t>(i), static_cast<uint64_t>(round)});
      auto tuned = FineTune(m, shards_[i].train, cfg_.ft_epochs, ft_sgd, local.batch_size, rng);
      if (!tuned.ok()) return tuned.status();
      m = *std::move(tuned);
    }
    auto acc = Accuracy(m, shards_[i].test.features, shards_[i].test.labels);
    if (!acc.ok()) return acc.status();
    last_acc_[i] = *acc;
    return absl::OkStatus();
  });
}

}  // namespace dpfl
