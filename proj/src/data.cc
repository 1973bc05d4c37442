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

#include "dpfl/data.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include "absl/strings/string_view.h"

#include "absl/strings/numbers.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "absl/strings/str_split.h"
#include "absl/strings/strip.h"
#include "dpfl/rng.h"

namespace dpfl {

absl::Status Dataset::Validate() const {
  if (features.rows() != labels.size()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "dataset has ", features.rows(), " feature rows and ", labels.size(), " labels"));
  }
  for (int y : labels) {
    if (y < 0 || y >= num_classes) {
      return absl::InvalidArgumentError(
          absl::StrCat("label ", y, " outside [0, ", num_classes, ")"));
    }
  }
  return absl::OkStatus();
}

Dataset Dataset::Subset(std::span<const size_t> indices) const {
  Dataset out;
  out.features = features.GatherRows(indices);
  out.labels.reserve(indices.size());
  for (size_t i : indices) out.labels.push_back(labels[i]);
  out.num_classes = num_classes;
  return out;
}

Dataset SampleBlobs(const Tensor2& means, size_t per_class, uint64_t seed) {
  const size_t num_classes = means.rows();
  const size_t dim = means.cols();
  RngEngine rng = MakeStream(seed, StreamTag::kSamples);
  std::normal_distribution<double> unit(0.0, 1.0);
  Dataset ds;
  ds.num_classes = static_cast<int>(num_classes);
  ds.features = Tensor2(num_classes * per_class, dim);
  ds.labels.reserve(num_classes * per_class);
  size_t row = 0;
  for (size_t k = 0; k < num_classes; ++k) {
    const auto mu = means.row(k);
    for (size_t n = 0; n < per_class; ++n, ++row) {
      auto x = ds.features.row(row);
      for (size_t j = 0; j < dim; ++j) x[j] = mu[j] + unit(rng);
      ds.labels.push_back(static_cast<int>(k));
    }
  }
  return ds;
}

absl::StatusOr<Dataset> GenerateSynthetic(const SyntheticSpec& spec) {
  if (spec.num_classes < 2) return absl::InvalidArgumentError("need at least 2 classes");
  if (spec.dim < 1) return absl::InvalidArgumentError("dimension must be >= 1");
  if (!(spec.class_separation >= 0.0)) {
    return absl::InvalidArgumentError("class separation must be >= 0");
  }
  RngEngine rng = MakeStream(spec.seed, StreamTag::kClassMeans);
  std::normal_distribution<double> unit(0.0, 1.0);
  Tensor2 means(spec.num_classes, spec.dim);
  for (int k = 0; k < spec.num_classes; ++k) {
    auto mu = means.row(k);
    double norm = 0.0;
    // A zero draw has no direction; redraw (probability zero in practice).
    while (norm == 0.0) {
      for (double& v : mu) v = unit(rng);
      norm = Norm2(mu);
    }
    for (double& v : mu) v *= spec.class_separation / norm;
  }
  return SampleBlobs(means, spec.per_class, spec.seed);
}

absl::StatusOr<ClientIndices> PartitionPathological(const Dataset& ds,
                                                    const PartitionSpec& spec) {
  const int n_clients = spec.num_clients;
  const int s = spec.classes_per_client;
  const int k = ds.num_classes;
  if (n_clients < 1) return absl::InvalidArgumentError("need at least one client");
  if (s < 1 || s > k) {
    return absl::InvalidArgumentError(
        absl::StrCat("classes per client must be in [1, ", k, "], got ", s));
  }
  RngEngine rng = MakeStream(spec.seed, StreamTag::kPartition);

  std::vector<int> class_perm(k);
  std::iota(class_perm.begin(), class_perm.end(), 0);
  std::shuffle(class_perm.begin(), class_perm.end(), rng);
  std::vector<int> client_perm(n_clients);
  std::iota(client_perm.begin(), client_perm.end(), 0);
  std::shuffle(client_perm.begin(), client_perm.end(), rng);

  // holders[c] lists, in increasing client id, the clients assigned class c.
  std::vector<std::vector<int>> holders(k);
  for (int slot = 0; slot < n_clients; ++slot) {
    const int client = client_perm[slot];
    for (int j = 0; j < s; ++j) {
      holders[class_perm[(static_cast<long>(slot) * s + j) % k]].push_back(client);
    }
  }
  for (auto& h : holders) std::sort(h.begin(), h.end());

  std::vector<std::vector<size_t>> by_class(k);
  for (size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);

  const int chunks = static_cast<int>((static_cast<long>(n_clients) * s + k - 1) / k);
  ClientIndices parts(n_clients);
  for (int c = 0; c < k; ++c) {
    if (holders[c].empty()) continue;
    auto& pool = by_class[c];
    const size_t chunk = pool.size() / chunks;
    if (chunk == 0) {
      return absl::FailedPreconditionError(absl::StrCat(
          "class ", c, " has ", pool.size(), " samples, too few for ", chunks,
          " non-empty chunks"));
    }
    std::shuffle(pool.begin(), pool.end(), rng);
    for (size_t h = 0; h < holders[c].size(); ++h) {
      auto& dst = parts[holders[c][h]];
      dst.insert(dst.end(), pool.begin() + h * chunk, pool.begin() + (h + 1) * chunk);
    }
  }
  for (auto& p : parts) std::sort(p.begin(), p.end());
  return parts;
}

absl::StatusOr<TrainTestIndices> SplitTrainTest(std::span<const size_t> indices,
                                                double fraction_train, uint64_t seed) {
  if (!(fraction_train > 0.0 && fraction_train < 1.0)) {
    return absl::InvalidArgumentError(
        absl::StrCat("train fraction must be in (0, 1), got ", fraction_train));
  }
  const size_t n = indices.size();
  if (n < 2) {
    return absl::FailedPreconditionError(
        absl::StrCat("cannot split a shard of ", n, " samples"));
  }
  std::vector<size_t> order(indices.begin(), indices.end());
  RngEngine rng = MakeStream(seed, StreamTag::kTrainTestSplit);
  std::shuffle(order.begin(), order.end(), rng);
  size_t n_train = static_cast<size_t>(std::llround(fraction_train * static_cast<double>(n)));
  n_train = std::clamp<size_t>(n_train, 1, n - 1);
  TrainTestIndices out;
  out.train.assign(order.begin(), order.begin() + n_train);
  out.test.assign(order.begin() + n_train, order.end());
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

absl::StatusOr<Dataset> ParseCsv(const std::string& text) {
  std::vector<double> values;
  std::vector<int> labels;
  size_t cols = 0;
  int line_no = 0;
  for (absl::string_view line : absl::StrSplit(text, '\n')) {
    ++line_no;
    line = absl::StripAsciiWhitespace(line);
    if (line.empty()) continue;
    std::vector<absl::string_view> fields = absl::StrSplit(line, ',');
    if (fields.size() < 2) {
      return absl::InvalidArgumentError(
          absl::StrCat("line ", line_no, ": expected features followed by a label"));
    }
    if (cols == 0) {
      cols = fields.size() - 1;
    } else if (fields.size() - 1 != cols) {
      return absl::InvalidArgumentError(absl::StrCat(
          "line ", line_no, ": ", fields.size() - 1, " features, expected ", cols));
    }
    for (size_t j = 0; j < cols; ++j) {
      double v;
      if (!absl::SimpleAtod(fields[j], &v) || !std::isfinite(v)) {
        return absl::InvalidArgumentError(
            absl::StrCat("line ", line_no, ": bad feature value '", fields[j], "'"));
      }
      values.push_back(v);
    }
    int y;
    if (!absl::SimpleAtoi(fields.back(), &y) || y < 0) {
      return absl::InvalidArgumentError(
          absl::StrCat("line ", line_no, ": bad label '", fields.back(), "'"));
    }
    labels.push_back(y);
  }
  if (labels.empty()) return absl::InvalidArgumentError("CSV contains no rows");
  Dataset ds;
  auto features = Tensor2::FromData(labels.size(), cols, std::move(values));
  if (!features.ok()) return features.status();
  ds.features = *std::move(features);
  ds.num_classes = *std::max_element(labels.begin(), labels.end()) + 1;
  ds.labels = std::move(labels);
  return ds;
}

absl::StatusOr<Dataset> LoadCsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  std::stringstream buf;
  buf << in.rdbuf();
  auto ds = ParseCsv(buf.str());
  if (!ds.ok()) {
    return absl::Status(ds.status().code(), absl::StrCat(path, ": ", ds.status().message()));
  }
  return ds;
}

absl::Status WriteCsv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) return absl::UnavailableError(absl::StrCat("cannot open ", path, " for writing"));
  for (size_t i = 0; i < ds.size(); ++i) {
    for (double v : ds.features.row(i)) out << absl::StrFormat("%.17g,", v);
    out << ds.labels[i] << '\n';
  }
  if (!out) return absl::DataLossError(absl::StrCat("write failed: ", path));
  return absl::OkStatus();
}

nlohmann::json PartitionManifest(const ClientIndices& parts) {
  nlohmann::json j = nlohmann::json::object();
  for (size_t i = 0; i < parts.size(); ++i) j[std::to_string(i)] = parts[i];
  return j;
}

}  // namespace dpfl
