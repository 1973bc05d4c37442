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

// Command-line driver. Exit codes: 0 success, 2 configuration error,
// 3 runtime error.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "absl/strings/str_format.h"
#include "dpfl/experiment.h"

namespace {

constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

int Run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  auto cl = dpfl::ParseCommandLine(args);
  if (!cl.ok()) {
    if (absl::IsCancelled(cl.status())) {
      std::cout << cl.status().message();
      return 0;
    }
    std::cerr << "error: " << cl.status().message() << "\n";
    return kConfigError;
  }

  if (cl->configs.size() == 1 && cl->repeats == 1) {
    const dpfl::ExperimentConfig& cfg = cl->configs.front();
    auto on_round = [](const dpfl::RoundReport& r, const dpfl::Simulator&) {
      std::cerr << absl::StrFormat("round %4d  acc %.4f +- %.4f  |u| %.4g  eps %.4g\n", r.round,
                                   r.test_acc_mean, r.test_acc_std, r.mean_update_norm,
                                   r.epsilon_spent);
    };
    auto result = dpfl::RunExperiment(cfg, on_round);
    if (!result.ok()) {
      std::cerr << "error: " << result.status().message() << "\n";
      return kRuntimeError;
    }
    std::cout << absl::StrFormat(
        "%s: final acc %.4f, best acc %.4f (round %d), epsilon %.4g at delta %.3g, sigma %.4g\n",
        dpfl::AlgorithmName(cfg.algorithm), result->final_acc, result->best_acc,
        result->best_round, result->epsilon, *cfg.delta, cfg.noise_multiplier);
    return 0;
  }

  auto rows = dpfl::RunSuite(cl->configs, cl->repeats);
  if (!rows.ok()) {
    std::cerr << "error: " << rows.status().message() << "\n";
    return kRuntimeError;
  }
  std::cout << dpfl::SuiteTable(*rows);
  for (const auto& row : *rows) {
    for (const auto& e : row.errors) std::cerr << row.label << ": " << e << "\n";
  }
  for (const auto& row : *rows) {
    if (row.values.empty()) return kRuntimeError;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) { return Run(argc, argv); }
