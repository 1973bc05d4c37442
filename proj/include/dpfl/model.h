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

#ifndef DPFL_MODEL_H_
#define DPFL_MODEL_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/string_view.h"
#include "dpfl/tensor.h"

namespace dpfl {

enum class Activation { kRelu, kIdentity };

absl::string_view ActivationName(Activation a);
absl::StatusOr<Activation> ParseActivation(absl::string_view name);

// Fully connected layer computing y = W x + b, with W stored out x in.
struct DenseLayer {
  Tensor2 weights;
  Vector bias;

  size_t in_dim() const { return weights.cols(); }
  size_t out_dim() const { return weights.rows(); }
  size_t num_params() const { return weights.size() + bias.size(); }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// An MLP whose parameters are split into a shared feature extractor (every
// layer but the last, each followed by `activation`) and a personal linear
// head producing class logits.
//
// Flattened layout of either part: for each layer in order, the weights in
// row-major order followed by the bias.
struct SplitModel {
  std::vector<DenseLayer> extractor;
  DenseLayer head;
  Activation activation = Activation::kRelu;

  size_t input_dim() const {
    return extractor.empty() ? head.in_dim() : extractor.front().in_dim();
  }
  size_t num_classes() const { return head.out_dim(); }
  // d1 and d2.
  size_t extractor_size() const;
  size_t head_size() const { return head.num_params(); }

  absl::Status Validate() const;

  friend bool operator==(const SplitModel&, const SplitModel&) = default;
};

// Gradients of the loss with respect to the two parameter blocks, in the
// flattened layout.
struct GradPair {
  Vector grad_phi;
  Vector grad_h;
};

struct LossAndGrad {
  double loss = 0.0;
  GradPair grads;
};

// Builds a model with the given hidden widths. Weights are drawn from a
// zero-mean normal with variance 2/fan_in (relu) or 1/fan_in (identity);
// biases start at zero.
absl::StatusOr<SplitModel> MakeModel(size_t input_dim,
                                     std::span<const size_t> hidden,
                                     size_t num_classes, Activation activation,
                                     uint64_t seed);

absl::StatusOr<Tensor2> Forward(const SplitModel& model, const Tensor2& batch_x);

// Mean softmax cross-entropy over the batch and its exact gradient.
absl::StatusOr<LossAndGrad> ComputeLossAndGrad(const SplitModel& model,
                                               const Tensor2& batch_x,
                                               std::span<const int> labels);

// Fraction of rows whose arg-max logit equals the label. Ties go to the
// lowest class index.
absl::StatusOr<double> Accuracy(const SplitModel& model, const Tensor2& x,
                                std::span<const int> labels);

Vector FlattenPhi(const SplitModel& model);
Vector FlattenHead(const SplitModel& model);
// Concatenation of FlattenPhi and FlattenHead.
Vector FlattenAll(const SplitModel& model);

absl::Status UnflattenPhi(std::span<const double> phi, SplitModel& model);
absl::Status UnflattenHead(std::span<const double> h, SplitModel& model);
absl::Status UnflattenAll(std::span<const double> theta, SplitModel& model);

// Checkpoints are JSON documents; see docs/checkpoint_format.md.
std::string CheckpointToString(const SplitModel& model);
absl::StatusOr<SplitModel> CheckpointFromString(absl::string_view text);
absl::Status SaveCheckpoint(const SplitModel& model, const std::string& path);
absl::StatusOr<SplitModel> LoadCheckpoint(const std::string& path);

}  // namespace dpfl

#endif  // DPFL_MODEL_H_
