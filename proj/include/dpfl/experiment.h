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

#ifndef DPFL_EXPERIMENT_H_
#define DPFL_EXPERIMENT_H_

#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "dpfl/federation.h"
#include "json.hpp"

namespace dpfl {

// Everything needed to reproduce one run. Noise is given either as an
// explicit multiplier or as an (epsilon, delta) target; Resolve() derives
// `noise_multiplier` from whichever was provided.
struct ExperimentConfig {
  AlgorithmKind algorithm = AlgorithmKind::kDp2FedSam;

  // Data.
  int clients = 100;
  int classes_per_client = 2;
  int num_classes = 10;
  size_t dim = 32;
  size_t per_class = 400;
  double class_separation = 2.0;
  double train_fraction = 0.9;
  // When set, examples are read from this CSV instead of generated.
  std::string data_csv;

  // Model.
  std::vector<size_t> hidden = {64};

  // Federation.
  int rounds = 200;
  double sample_ratio = 0.05;
  double clip = 0.1;
  std::optional<double> sigma;
  std::optional<double> epsilon;
  // Defaults to 1 / clients.
  std::optional<double> delta;
  // Output of Resolve(): sigma, or the value calibrated from epsilon.
  double noise_multiplier = 0.0;
  double sam_rho = 0.1;
  int tau_h = 2;
  int tau_phi = 2;
  double lr_phi = 0.1;
  double lr_h = 0.1;
  double momentum = 0.0;
  double lr_decay = 0.99;
  size_t batch = 32;
  int ft_epochs = 1;
  uint64_t seed = 0;
  int workers = 1;

  // Output.
  std::string output_dir;
  bool dump_updates = false;
  int repeats = 1;

  // Checks every constraint and reports all violations at once. On success
  // `delta` and `noise_multiplier` are set. Idempotent.
  absl::Status Resolve();

  // Requires Resolve().
  FederationConfig ToFederationConfig() const;
  nlohmann::json ToJson() const;
};

struct CommandLine {
  // One config per algorithm named in --algorithm (comma separated).
  std::vector<ExperimentConfig> configs;
  int repeats = 1;
};

// Parses CLI flags, reading key=value lines from --config first; flags given
// on the command line override the file. Errors are InvalidArgument.
absl::StatusOr<CommandLine> ParseCommandLine(const std::vector<std::string>& args);

// Single-algorithm convenience wrapper around ParseCommandLine.
absl::StatusOr<ExperimentConfig> ParseConfig(const std::vector<std::string>& args);

// metrics.csv writer that flushes after every row so an interrupted run
// leaves a valid prefix.
class MetricsWriter {
 public:
  static constexpr char kHeader[] =
      "round,test_acc_mean,test_acc_std,mean_update_norm,std_update_norm,alpha_bar,"
      "alpha_tilde,mean_drift,epsilon_spent";

  static absl::StatusOr<MetricsWriter> Open(const std::string& path);
  absl::Status Append(const RoundReport& report);

 private:
  MetricsWriter(std::string path, std::ofstream out)
      : path_(std::move(path)), out_(std::move(out)) {}
  std::string path_;
  std::ofstream out_;
};

std::string FormatReportRow(const RoundReport& report);

// Writes metrics.csv for already collected reports.
absl::Status WriteMetrics(const std::vector<RoundReport>& reports, const std::string& dir);

struct ExperimentResult {
  std::vector<RoundReport> reports;
  double best_acc = 0.0;
  int best_round = -1;
  double final_acc = 0.0;
  double epsilon = 0.0;
  nlohmann::json summary;
};

using RoundCallback = std::function<void(const RoundReport&, const Simulator&)>;

// Builds data, partition and model from the config and runs every round.
// When output_dir is set, writes metrics.csv (row by row), summary.json,
// partition.json and, with dump_updates, updates.csv.
absl::StatusOr<ExperimentResult> RunExperiment(const ExperimentConfig& cfg,
                                               const RoundCallback& on_round = nullptr);

struct SuiteRow {
  std::string label;
  // Best test accuracy of each successful repeat.
  std::vector<double> values;
  double mean = 0.0;
  // Population standard deviation across repeats.
  double std = 0.0;
  std::vector<std::string> errors;
};

// Runs each config `repeats` times with seeds seed, seed+1, ... and
// summarises best accuracy. Failures are recorded in the row and the suite
// continues. With an output_dir on the first config, writes suite.csv and
// suite.txt there and per-run outputs to <label>/seed<k>/.
absl::StatusOr<std::vector<SuiteRow>> RunSuite(const std::vector<ExperimentConfig>& configs,
                                               int repeats);

std::string SuiteTable(const std::vector<SuiteRow>& rows);
std::string SuiteCsv(const std::vector<SuiteRow>& rows);

}  // namespace dpfl

#endif  // DPFL_EXPERIMENT_H_
