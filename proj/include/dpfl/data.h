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

#ifndef DPFL_DATA_H_
#define DPFL_DATA_H_

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "dpfl/tensor.h"
#include "json.hpp"

namespace dpfl {

struct Dataset {
  Tensor2 features;
  std::vector<int> labels;
  int num_classes = 0;

  size_t size() const { return labels.size(); }
  size_t dim() const { return features.cols(); }

  absl::Status Validate() const;
  Dataset Subset(std::span<const size_t> indices) const;
};

struct SyntheticSpec {
  int num_classes = 10;
  size_t per_class = 100;
  size_t dim = 32;
  double class_separation = 1.0;
  uint64_t seed = 0;
};

// Gaussian blobs with unit covariance. Class k's mean is a uniformly random
// point on the sphere of radius class_separation. Rows are grouped by class.
absl::StatusOr<Dataset> GenerateSynthetic(const SyntheticSpec& spec);

// Draws per_class unit-covariance samples around each row of `means`.
// The noise depends only on the seed and the shape, so shifting every mean
// by a constant shifts every sample by that constant.
Dataset SampleBlobs(const Tensor2& means, size_t per_class, uint64_t seed);

struct PartitionSpec {
  int num_clients = 0;
  int classes_per_client = 0;
  uint64_t seed = 0;
};

using ClientIndices = std::vector<std::vector<size_t>>;

// Pathological non-IID split: every client receives samples from exactly S
// classes and no sample is given to two clients.
//
// Client i is assigned the classes pi((i*S + j) mod K), j < S, for a seeded
// class permutation pi, with client ids also permuted, so class loads differ
// by at most one. Each class's samples are shuffled and cut into
// ceil(N*S/K) equal chunks (remainder unused), dealt in client-id order to
// the clients that hold the class.
absl::StatusOr<ClientIndices> PartitionPathological(const Dataset& ds,
                                                    const PartitionSpec& spec);

struct TrainTestIndices {
  std::vector<size_t> train;
  std::vector<size_t> test;
};

// Shuffles a shard and keeps round(fraction * n) for training, clamped so
// both sides are non-empty. Outputs are sorted.
absl::StatusOr<TrainTestIndices> SplitTrainTest(std::span<const size_t> indices,
                                                double fraction_train, uint64_t seed);

// One example per line: feature columns followed by an integer label.
absl::StatusOr<Dataset> ParseCsv(const std::string& text);
absl::StatusOr<Dataset> LoadCsv(const std::string& path);
absl::Status WriteCsv(const Dataset& ds, const std::string& path);

// {"<client_id>": [indices...], ...}
nlohmann::json PartitionManifest(const ClientIndices& parts);

}  // namespace dpfl

#endif  // DPFL_DATA_H_
