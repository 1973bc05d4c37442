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

#include "dpfl/experiment.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>
#include <utility>

#include "CLI11.hpp"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "absl/strings/str_join.h"
#include "absl/strings/match.h"
#include "absl/strings/str_split.h"
#include "absl/strings/strip.h"
#include "dpfl/data.h"
#include "dpfl/model.h"

namespace dpfl {
namespace {

nlohmann::json FiniteOrNull(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

absl::Status WriteText(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) return absl::UnavailableError(absl::StrCat("cannot open ", path, " for writing"));
  out << text;
  if (!out) return absl::DataLossError(absl::StrCat("write failed: ", path));
  return absl::OkStatus();
}

absl::Status EnsureDir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) return absl::UnavailableError(absl::StrCat("cannot create ", dir, ": ", ec.message()));
  return absl::OkStatus();
}

absl::StatusOr<std::vector<ClientShard>> BuildShards(const ExperimentConfig& cfg, size_t* dim) {
  absl::StatusOr<Dataset> ds;
  if (cfg.data_csv.empty()) {
    ds = GenerateSynthetic({cfg.num_classes, cfg.per_class, cfg.dim, cfg.class_separation, cfg.seed});
  } else {
    ds = LoadCsv(cfg.data_csv);
  }
  if (!ds.ok()) return ds.status();
  *dim = ds->dim();
  auto parts = PartitionPathological(*ds, {cfg.clients, cfg.classes_per_client, cfg.seed});
  if (!parts.ok()) return parts.status();
  std::vector<ClientShard> shards;
  shards.reserve(parts->size());
  for (size_t i = 0; i < parts->size(); ++i) {
    auto split = SplitTrainTest((*parts)[i], cfg.train_fraction, DeriveSeed(cfg.seed, {i}));
    if (!split.ok()) {
      return absl::Status(split.status().code(),
                          absl::StrCat("client ", i, ": ", split.status().message()));
    }
    shards.push_back({ds->Subset(split->train), ds->Subset(split->test)});
  }
  if (!cfg.output_dir.empty()) {
    if (auto s = WriteText(cfg.output_dir + "/partition.json", PartitionManifest(*parts).dump() + "\n");
        !s.ok()) {
      return s;
    }
  }
  return shards;
}

// Finds --config on the command line and turns each `key = value` line of
// the file into a `--key=value` argument. '#' starts a comment; underscores
// in keys are accepted in place of dashes.
absl::StatusOr<std::vector<std::string>> ConfigFileArgs(const std::vector<std::string>& args) {
  std::string path;
  for (size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 == args.size()) return absl::InvalidArgumentError("--config requires a path");
      path = args[i + 1];
    } else if (absl::StartsWith(args[i], "--config=")) {
      path = args[i].substr(9);
    }
  }
  std::vector<std::string> out;
  if (path.empty()) return out;
  std::ifstream in(path);
  if (!in) return absl::InvalidArgumentError(absl::StrCat("cannot read config file ", path));
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    absl::string_view content = line;
    if (size_t hash = content.find('#'); hash != absl::string_view::npos) {
      content = content.substr(0, hash);
    }
    content = absl::StripAsciiWhitespace(content);
    if (content.empty()) continue;
    const size_t eq = content.find('=');
    if (eq == absl::string_view::npos) {
      return absl::InvalidArgumentError(
          absl::StrCat(path, ":", line_no, ": expected key = value"));
    }
    std::string key(absl::StripAsciiWhitespace(content.substr(0, eq)));
    const absl::string_view value = absl::StripAsciiWhitespace(content.substr(eq + 1));
    if (key.empty() || key == "config") {
      return absl::InvalidArgumentError(absl::StrCat(path, ":", line_no, ": invalid key"));
    }
    std::replace(key.begin(), key.end(), '_', '-');
    out.push_back(absl::StrCat("--", key, "=", value));
  }
  return out;
}

}  // namespace

absl::Status ExperimentConfig::Resolve() {
  std::vector<std::string> errors;
  if (clients < 1) errors.push_back("--clients must be >= 1");
  if (num_classes < 2) errors.push_back("--num-classes must be >= 2");
  if (classes_per_client < 1 || classes_per_client > num_classes) {
    errors.push_back(absl::StrCat("--classes-per-client must be in [1, ", num_classes, "]"));
  }
  if (dim < 1) errors.push_back("--dim must be >= 1");
  if (per_class < 1) errors.push_back("--per-class must be >= 1");
  if (!(class_separation >= 0.0)) errors.push_back("--class-separation must be >= 0");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) errors.push_back("--train-fraction must be in (0, 1)");
  for (size_t w : hidden) {
    if (w == 0) errors.push_back("--hidden widths must be positive");
  }
  if (rounds < 0) errors.push_back("--rounds must be >= 0");
  if (!(sample_ratio > 0.0 && sample_ratio <= 1.0)) errors.push_back("--sample-ratio must be in (0, 1]");
  if (!(clip > 0.0)) errors.push_back("--clip must be > 0");
  if (!(sam_rho >= 0.0)) errors.push_back("--sam-rho must be >= 0");
  if (tau_h < 0 || tau_phi < 0) errors.push_back("--tau-h and --tau-phi must be >= 0");
  if (!(lr_phi > 0.0)) errors.push_back("--lr-phi must be > 0");
  if (!(lr_h > 0.0)) errors.push_back("--lr-h must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) errors.push_back("--momentum must be in [0, 1)");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) errors.push_back("--lr-decay must be in (0, 1]");
  if (batch < 1) errors.push_back("--batch must be >= 1");
  if (ft_epochs < 0) errors.push_back("--ft-epochs must be >= 0");
  if (workers < 1) errors.push_back("--workers must be >= 1");
  if (repeats < 1) errors.push_back("--repeats must be >= 1");

  if (!delta.has_value() && clients >= 1) delta = 1.0 / clients;
  if (delta.has_value() && !(*delta > 0.0 && *delta < 1.0)) errors.push_back("--delta must be in (0, 1)");

  if (sigma.has_value() && epsilon.has_value()) {
    errors.push_back("--sigma conflicts with --epsilon; give exactly one noise specification");
  } else if (!sigma.has_value() && !epsilon.has_value()) {
    if (IsPrivate(algorithm)) errors.push_back("no noise specification; give --sigma or --epsilon");
    noise_multiplier = 0.0;
  } else if (sigma.has_value()) {
    if (!(*sigma >= 0.0) || !std::isfinite(*sigma)) errors.push_back("--sigma must be finite and >= 0");
    if (*sigma > 0.0 && std::isinf(clip)) errors.push_back("--sigma > 0 requires a finite --clip");
    noise_multiplier = *sigma;
  } else if (errors.empty()) {
    auto cal = CalibrateSigma(*epsilon, *delta, rounds, sample_ratio);
    if (!cal.ok()) {
      errors.push_back(std::string(cal.status().message()));
    } else {
      noise_multiplier = cal->sigma;
      if (std::isinf(clip) && cal->sigma > 0.0) errors.push_back("--epsilon requires a finite --clip");
    }
  }
  if (errors.empty() && sample_ratio * clients < 1.0) {
    errors.push_back("--sample-ratio * --clients must be >= 1");
  }
  if (errors.empty()) return absl::OkStatus();
  return absl::InvalidArgumentError(absl::StrCat("invalid configuration:\n  ",
                                                 absl::StrJoin(errors, "\n  ")));
}

FederationConfig ExperimentConfig::ToFederationConfig() const {
  FederationConfig f;
  f.algorithm = algorithm;
  f.rounds = rounds;
  f.sample_ratio = sample_ratio;
  f.clip = clip;
  f.sigma = noise_multiplier;
  f.delta = delta.value_or(1.0 / std::max(clients, 1));
  f.sam_rho = sam_rho;
  f.tau_h = tau_h;
  f.tau_phi = tau_phi;
  f.lr_phi = lr_phi;
  f.lr_h = lr_h;
  f.momentum = momentum;
  f.lr_decay = lr_decay;
  f.batch_size = batch;
  f.ft_epochs = ft_epochs;
  f.seed = seed;
  f.workers = workers;
  return f;
}

nlohmann::json ExperimentConfig::ToJson() const {
  nlohmann::json j;
  j["algorithm"] = std::string(AlgorithmName(algorithm));
  j["clients"] = clients;
  j["classes_per_client"] = classes_per_client;
  j["num_classes"] = num_classes;
  j["dim"] = dim;
  j["per_class"] = per_class;
  j["class_separation"] = class_separation;
  j["train_fraction"] = train_fraction;
  j["data_csv"] = data_csv;
  j["hidden"] = hidden;
  j["rounds"] = rounds;
  j["sample_ratio"] = sample_ratio;
  j["clip"] = FiniteOrNull(clip);
  j["sigma"] = sigma ? nlohmann::json(*sigma) : nlohmann::json(nullptr);
  j["epsilon"] = epsilon ? nlohmann::json(*epsilon) : nlohmann::json(nullptr);
  j["delta"] = delta ? nlohmann::json(*delta) : nlohmann::json(nullptr);
  j["noise_multiplier"] = noise_multiplier;
  j["sam_rho"] = sam_rho;
  j["tau_h"] = tau_h;
  j["tau_phi"] = tau_phi;
  j["lr_phi"] = lr_phi;
  j["lr_h"] = lr_h;
  j["momentum"] = momentum;
  j["lr_decay"] = lr_decay;
  j["batch"] = batch;
  j["ft_epochs"] = ft_epochs;
  j["seed"] = seed;
  return j;
}

absl::StatusOr<CommandLine> ParseCommandLine(const std::vector<std::string>& args) {
  ExperimentConfig cfg;
  std::string algorithms;
  std::optional<double> sigma, epsilon, delta;

  CLI::App app{"Differentially private federated learning simulator"};
  std::string config_path;
  app.add_option("--config", config_path,
                 "Flat key=value file; command-line flags take precedence");
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.add_option("--algorithm", algorithms,
                 "dp-fedavg, dp-fedavg-ft, dp-fedsam, dp-fedsam-ft, centaur, dp2-fedsam, "
                 "p-fedsam (comma-separated for a comparison suite)");
  app.add_option("--clients", cfg.clients, "Number of clients N");
  app.add_option("--classes-per-client", cfg.classes_per_client, "Classes per client S");
  app.add_option("--num-classes", cfg.num_classes, "Number of classes K");
  app.add_option("--dim", cfg.dim, "Feature dimension of synthetic data");
  app.add_option("--per-class", cfg.per_class, "Synthetic examples per class");
  app.add_option("--class-separation", cfg.class_separation, "Radius of synthetic class means");
  app.add_option("--train-fraction", cfg.train_fraction, "Per-client train share");
  app.add_option("--data-csv", cfg.data_csv, "Read examples from CSV instead of generating");
  app.add_option("--hidden", cfg.hidden, "Extractor hidden widths")->delimiter(',');
  app.add_option("--rounds", cfg.rounds, "Communication rounds T");
  app.add_option("--sample-ratio", cfg.sample_ratio, "Client sampling ratio r");
  app.add_option("--clip", cfg.clip, "Clipping threshold C (inf disables)");
  app.add_option("--sigma", sigma, "Noise multiplier");
  app.add_option("--epsilon", epsilon, "Target epsilon (sigma is calibrated)");
  app.add_option("--delta", delta, "Target delta (default 1/N)");
  app.add_option("--sam-rho", cfg.sam_rho, "SAM perturbation radius");
  app.add_option("--tau-h", cfg.tau_h, "Local head epochs");
  app.add_option("--tau-phi", cfg.tau_phi, "Local extractor epochs (full-model epochs for baselines)");
  app.add_option("--lr-phi", cfg.lr_phi, "Extractor learning rate");
  app.add_option("--lr-h", cfg.lr_h, "Head learning rate");
  app.add_option("--momentum", cfg.momentum, "Local heavy-ball momentum");
  app.add_option("--lr-decay", cfg.lr_decay, "Per-round learning-rate decay");
  app.add_option("--batch", cfg.batch, "Mini-batch size");
  app.add_option("--ft-epochs", cfg.ft_epochs, "Fine-tuning epochs for FT variants");
  app.add_option("--seed", cfg.seed, "Master seed");
  app.add_option("--workers", cfg.workers, "Client worker threads");
  app.add_option("--output", cfg.output_dir, "Output directory");
  app.add_flag("--dump-updates", cfg.dump_updates, "Write per-client update norms");
  app.add_option("--repeats", cfg.repeats, "Seeds per configuration");

  // The file's entries are parsed as flags placed before the command line,
  // so later (command-line) values win.
  auto file_args = ConfigFileArgs(args);
  if (!file_args.ok()) return file_args.status();
  std::vector<std::string> all = *std::move(file_args);
  all.insert(all.end(), args.begin(), args.end());
  std::vector<std::string> reversed(all.rbegin(), all.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    return absl::CancelledError(app.help());
  } catch (const CLI::ParseError& e) {
    return absl::InvalidArgumentError(e.what());
  }

  cfg.sigma = sigma;
  cfg.epsilon = epsilon;
  cfg.delta = delta;
  CommandLine out;
  out.repeats = cfg.repeats;
  if (algorithms.empty()) return absl::InvalidArgumentError("--algorithm is required");
  std::vector<std::string> problems;
  for (absl::string_view name : absl::StrSplit(algorithms, ',', absl::SkipEmpty())) {
    auto kind = ParseAlgorithmKind(name);
    if (!kind.ok()) {
      problems.push_back(std::string(kind.status().message()));
      continue;
    }
    ExperimentConfig c = cfg;
    c.algorithm = *kind;
    if (auto s = c.Resolve(); !s.ok()) return s;
    out.configs.push_back(std::move(c));
  }
  if (!problems.empty()) {
    return absl::InvalidArgumentError(absl::StrJoin(problems, "\n"));
  }
  if (out.configs.empty()) return absl::InvalidArgumentError("--algorithm is required");
  return out;
}

absl::StatusOr<ExperimentConfig> ParseConfig(const std::vector<std::string>& args) {
  auto cl = ParseCommandLine(args);
  if (!cl.ok()) return cl.status();
  if (cl->configs.size() != 1) {
    return absl::InvalidArgumentError("expected exactly one algorithm");
  }
  return std::move(cl->configs.front());
}

std::string FormatReportRow(const RoundReport& r) {
  return absl::StrFormat("%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", r.round,
                         r.test_acc_mean, r.test_acc_std, r.mean_update_norm,
                         r.std_update_norm, r.alpha_bar, r.alpha_tilde, r.mean_drift,
                         r.epsilon_spent);
}

absl::StatusOr<MetricsWriter> MetricsWriter::Open(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) return absl::UnavailableError(absl::StrCat("cannot open ", path, " for writing"));
  out << kHeader << '\n' << std::flush;
  if (!out) return absl::DataLossError(absl::StrCat("write failed: ", path));
  return MetricsWriter(path, std::move(out));
}

absl::Status MetricsWriter::Append(const RoundReport& report) {
  out_ << FormatReportRow(report) << '\n' << std::flush;
  if (!out_) return absl::DataLossError(absl::StrCat("write failed: ", path_));
  return absl::OkStatus();
}

absl::Status WriteMetrics(const std::vector<RoundReport>& reports, const std::string& dir) {
  if (auto s = EnsureDir(dir); !s.ok()) return s;
  auto writer = MetricsWriter::Open(dir + "/metrics.csv");
  if (!writer.ok()) return writer.status();
  for (const auto& r : reports) {
    if (auto s = writer->Append(r); !s.ok()) return s;
  }
  return absl::OkStatus();
}

absl::StatusOr<ExperimentResult> RunExperiment(const ExperimentConfig& input,
                                               const RoundCallback& on_round) {
  ExperimentConfig cfg = input;
  if (auto s = cfg.Resolve(); !s.ok()) return s;
  const bool write = !cfg.output_dir.empty();
  if (write) {
    if (auto s = EnsureDir(cfg.output_dir); !s.ok()) return s;
  }

  size_t dim = 0;
  auto shards = BuildShards(cfg, &dim);
  if (!shards.ok()) return shards.status();
  int num_classes = cfg.num_classes;
  for (const auto& sh : *shards) num_classes = std::max(num_classes, sh.train.num_classes);
  auto model = MakeModel(dim, cfg.hidden, num_classes, Activation::kRelu, cfg.seed);
  if (!model.ok()) return model.status();
  auto sim = Simulator::Create(cfg.ToFederationConfig(), *std::move(model), *std::move(shards));
  if (!sim.ok()) return sim.status();

  std::optional<MetricsWriter> metrics;
  std::ofstream updates;
  if (write) {
    auto w = MetricsWriter::Open(cfg.output_dir + "/metrics.csv");
    if (!w.ok()) return w.status();
    metrics.emplace(*std::move(w));
    if (cfg.dump_updates) {
      updates.open(cfg.output_dir + "/updates.csv", std::ios::trunc);
      if (!updates) return absl::UnavailableError("cannot open updates.csv");
      updates << "round,client_id,raw_norm,clip_alpha\n";
    }
  }

  ExperimentResult result;
  for (int t = 0; t < cfg.rounds; ++t) {
    auto report = sim->RunRound();
    if (!report.ok()) return report.status();
    if (metrics) {
      if (auto s = metrics->Append(*report); !s.ok()) return s;
    }
    if (updates.is_open()) {
      for (const auto& u : sim->last_updates()) {
        updates << absl::StrFormat("%d,%d,%.17g,%.17g\n", t, u.client_id, u.raw_norm,
                                   u.clip_alpha);
      }
      updates.flush();
    }
    if (on_round) on_round(*report, *sim);
    result.reports.push_back(*report);
  }

  auto eps = sim->ledger().ToEpsilon(sim->config().delta);
  if (!eps.ok()) return eps.status();
  result.epsilon = eps->epsilon;
  result.best_acc = cfg.rounds > 0 ? sim->best_accuracy() : 0.0;
  result.best_round = sim->best_round();
  result.final_acc = result.reports.empty() ? 0.0 : result.reports.back().test_acc_mean;

  nlohmann::json& summary = result.summary;
  summary["algorithm"] = std::string(AlgorithmName(cfg.algorithm));
  summary["rounds"] = cfg.rounds;
  summary["final_acc"] = result.final_acc;
  summary["best_acc"] = result.best_acc;
  summary["best_round"] = result.best_round;
  summary["epsilon"] = FiniteOrNull(result.epsilon);
  summary["delta"] = sim->config().delta;
  summary["sigma"] = sim->config().sigma;
  summary["config"] = cfg.ToJson();
  summary["ledger"] = sim->ledger().ToJson();
  summary["per_client_acc_at_best_round"] = sim->client_accuracy_at_best();
  summary["per_client_best_acc"] = sim->client_best_accuracy();
  if (write) {
    if (auto s = WriteText(cfg.output_dir + "/summary.json", summary.dump(2) + "\n"); !s.ok()) {
      return s;
    }
  }
  return result;
}

absl::StatusOr<std::vector<SuiteRow>> RunSuite(const std::vector<ExperimentConfig>& configs,
                                               int repeats) {
  if (repeats < 1) return absl::InvalidArgumentError("repeats must be >= 1");
  std::vector<SuiteRow> rows;
  for (size_t c = 0; c < configs.size(); ++c) {
    SuiteRow row;
    row.label = std::string(AlgorithmName(configs[c].algorithm));
    for (int rep = 0; rep < repeats; ++rep) {
      ExperimentConfig run = configs[c];
      run.seed = configs[c].seed + static_cast<uint64_t>(rep);
      if (!configs[c].output_dir.empty()) {
        run.output_dir = absl::StrCat(configs[c].output_dir, "/", c, "_", row.label, "/seed",
                                      run.seed);
      }
      auto r = RunExperiment(run);
      if (!r.ok()) {
        row.errors.push_back(absl::StrCat("seed ", run.seed, ": ", r.status().message()));
        continue;
      }
      row.values.push_back(r->best_acc);
    }
    if (!row.values.empty()) {
      double s = 0.0;
      for (double v : row.values) s += v;
      row.mean = s / static_cast<double>(row.values.size());
      double ss = 0.0;
      for (double v : row.values) ss += (v - row.mean) * (v - row.mean);
      row.std = std::sqrt(ss / static_cast<double>(row.values.size()));
    }
    rows.push_back(std::move(row));
  }
  if (!configs.empty() && !configs.front().output_dir.empty()) {
    const std::string& dir = configs.front().output_dir;
    if (auto s = EnsureDir(dir); !s.ok()) return s;
    if (auto s = WriteText(dir + "/suite.csv", SuiteCsv(rows)); !s.ok()) return s;
    if (auto s = WriteText(dir + "/suite.txt", SuiteTable(rows)); !s.ok()) return s;
  }
  return rows;
}

std::string SuiteCsv(const std::vector<SuiteRow>& rows) {
  std::string out = "label,runs,mean_best_acc,std_best_acc,values,errors\n";
  for (const auto& r : rows) {
    absl::StrAppend(&out, r.label, ",", r.values.size(), ",",
                    absl::StrFormat("%.17g,%.17g,", r.mean, r.std),
                    absl::StrJoin(r.values, ";",
                                  [](std::string* o, double v) {
                                    absl::StrAppend(o, absl::StrFormat("%.17g", v));
                                  }),
                    ",", r.errors.size(), "\n");
  }
  return out;
}

std::string SuiteTable(const std::vector<SuiteRow>& rows) {
  size_t width = 9;
  for (const auto& r : rows) width = std::max(width, r.label.size());
  std::string out = absl::StrFormat("%-*s  %6s  %14s  %s\n", width, "algorithm", "runs",
                                    "best acc (%)", "errors");
  for (const auto& r : rows) {
    absl::StrAppend(&out, absl::StrFormat("%-*s  %6d  %7.2f +- %4.2f  %d\n", width, r.label,
                                          r.values.size(), 100.0 * r.mean, 100.0 * r.std,
                                          r.errors.size()));
  }
  return out;
}

}  // namespace dpfl
