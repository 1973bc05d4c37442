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

#include "dpfl/model.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <utility>

#include "absl/strings/str_cat.h"
#include "dpfl/rng.h"
#include "json.hpp"

namespace dpfl {
namespace {

constexpr int kCheckpointVersion = 1;
constexpr absl::string_view kCheckpointFormat = "dpfl-split-mlp";

absl::Status CheckLayer(const DenseLayer& layer, absl::string_view name) {
  if (layer.weights.rows() == 0 || layer.weights.cols() == 0) {
    return absl::InvalidArgumentError(absl::StrCat(name, " has an empty weight matrix"));
  }
  if (layer.bias.size() != layer.out_dim()) {
    return absl::InvalidArgumentError(
        absl::StrCat(name, " bias has length ", layer.bias.size(),
                     ", expected ", layer.out_dim()));
  }
  return absl::OkStatus();
}

// Z = X W^T + b, one row per example.
Tensor2 Affine(const DenseLayer& layer, const Tensor2& x) {
  const size_t batch = x.rows();
  const size_t in = layer.in_dim();
  const size_t out = layer.out_dim();
  Tensor2 z(batch, out);
  for (size_t b = 0; b < batch; ++b) {
    const auto xr = x.row(b);
    auto zr = z.row(b);
    for (size_t o = 0; o < out; ++o) {
      const auto wr = layer.weights.row(o);
      double acc = layer.bias[o];
      for (size_t i = 0; i < in; ++i) acc += wr[i] * xr[i];
      zr[o] = acc;
    }
  }
  return z;
}

void ApplyActivation(Activation act, Tensor2& z) {
  if (act == Activation::kIdentity) return;
  for (double& v : z.mutable_data()) v = v > 0.0 ? v : 0.0;
}

absl::Status CheckInput(const SplitModel& model, const Tensor2& x) {
  if (x.cols() != model.input_dim()) {
    return absl::InvalidArgumentError(
        absl::StrCat("input has ", x.cols(), " columns, model expects ",
                     model.input_dim()));
  }
  if (!x.AllFinite()) return absl::InvalidArgumentError("input contains non-finite values");
  return absl::OkStatus();
}

void AppendLayer(const DenseLayer& layer, Vector& out) {
  const auto w = layer.weights.data();
  out.insert(out.end(), w.begin(), w.end());
  out.insert(out.end(), layer.bias.begin(), layer.bias.end());
}

size_t ReadLayer(std::span<const double> src, size_t offset, DenseLayer& layer) {
  auto w = layer.weights.mutable_data();
  std::copy_n(src.begin() + offset, w.size(), w.begin());
  offset += w.size();
  std::copy_n(src.begin() + offset, layer.bias.size(), layer.bias.begin());
  return offset + layer.bias.size();
}

nlohmann::json LayerToJson(const DenseLayer& layer) {
  const auto w = layer.weights.data();
  return {{"rows", layer.weights.rows()},
          {"cols", layer.weights.cols()},
          {"weights", std::vector<double>(w.begin(), w.end())},
          {"bias", layer.bias}};
}

absl::StatusOr<DenseLayer> LayerFromJson(const nlohmann::json& j) {
  DenseLayer layer;
  const auto rows = j.at("rows").get<size_t>();
  const auto cols = j.at("cols").get<size_t>();
  auto weights = Tensor2::FromData(rows, cols, j.at("weights").get<std::vector<double>>());
  if (!weights.ok()) return weights.status();
  layer.weights = *std::move(weights);
  layer.bias = j.at("bias").get<Vector>();
  return layer;
}

}  // namespace

absl::string_view ActivationName(Activation a) {
  return a == Activation::kRelu ? "relu" : "identity";
}

absl::StatusOr<Activation> ParseActivation(absl::string_view name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "identity") return Activation::kIdentity;
  return absl::InvalidArgumentError(absl::StrCat("unknown activation '", name, "'"));
}

size_t SplitModel::extractor_size() const {
  size_t n = 0;
  for (const auto& layer : extractor) n += layer.num_params();
  return n;
}

absl::Status SplitModel::Validate() const {
  for (size_t k = 0; k < extractor.size(); ++k) {
    if (auto s = CheckLayer(extractor[k], absl::StrCat("extractor layer ", k)); !s.ok()) {
      return s;
    }
    const size_t next_in =
        k + 1 < extractor.size() ? extractor[k + 1].in_dim() : head.in_dim();
    if (extractor[k].out_dim() != next_in) {
      return absl::InvalidArgumentError(
          absl::StrCat("extractor layer ", k, " outputs ", extractor[k].out_dim(),
                       " values but the next layer expects ", next_in));
    }
  }
  return CheckLayer(head, "head layer");
}

absl::StatusOr<SplitModel> MakeModel(size_t input_dim,
                                     std::span<const size_t> hidden,
                                     size_t num_classes, Activation activation,
                                     uint64_t seed) {
  if (input_dim == 0 || num_classes == 0) {
    return absl::InvalidArgumentError("input and output dimensions must be positive");
  }
  RngEngine rng = MakeStream(seed, StreamTag::kModelInit);
  const double gain = activation == Activation::kRelu ? 2.0 : 1.0;
  auto make_layer = [&](size_t in, size_t out) {
    DenseLayer layer{Tensor2(out, in), Vector(out, 0.0)};
    std::normal_distribution<double> dist(0.0, std::sqrt(gain / static_cast<double>(in)));
    for (double& w : layer.weights.mutable_data()) w = dist(rng);
    return layer;
  };
  SplitModel model;
  model.activation = activation;
  size_t in = input_dim;
  for (size_t width : hidden) {
    if (width == 0) return absl::InvalidArgumentError("hidden widths must be positive");
    model.extractor.push_back(make_layer(in, width));
    in = width;
  }
  model.head = make_layer(in, num_classes);
  return model;
}

absl::StatusOr<Tensor2> Forward(const SplitModel& model, const Tensor2& batch_x) {
  if (auto s = CheckInput(model, batch_x); !s.ok()) return s;
  Tensor2 a = batch_x;
  for (const auto& layer : model.extractor) {
    a = Affine(layer, a);
    ApplyActivation(model.activation, a);
  }
  Tensor2 logits = Affine(model.head, a);
  if (!logits.AllFinite()) return absl::OutOfRangeError("forward pass produced non-finite logits");
  return logits;
}

absl::StatusOr<LossAndGrad> ComputeLossAndGrad(const SplitModel& model,
                                               const Tensor2& batch_x,
                                               std::span<const int> labels) {
  if (batch_x.rows() == 0) return absl::InvalidArgumentError("empty batch");
  if (labels.size() != batch_x.rows()) {
    return absl::InvalidArgumentError(
        absl::StrCat("batch has ", batch_x.rows(), " rows but ", labels.size(), " labels"));
  }
  if (auto s = CheckInput(model, batch_x); !s.ok()) return s;
  const size_t num_classes = model.num_classes();
  for (int y : labels) {
    if (y < 0 || static_cast<size_t>(y) >= num_classes) {
      return absl::InvalidArgumentError(absl::StrCat("label ", y, " outside [0, ", num_classes, ")"));
    }
  }

  const size_t batch = batch_x.rows();
  const size_t depth = model.extractor.size();
  // acts[0] is the input; acts[k + 1] the activated output of extractor layer k.
  std::vector<Tensor2> acts;
  acts.reserve(depth + 1);
  acts.push_back(batch_x);
  for (const auto& layer : model.extractor) {
    Tensor2 z = Affine(layer, acts.back());
    ApplyActivation(model.activation, z);
    acts.push_back(std::move(z));
  }
  Tensor2 logits = Affine(model.head, acts.back());

  LossAndGrad out;
  const double inv_batch = 1.0 / static_cast<double>(batch);
  Tensor2 dlogits(batch, num_classes);
  for (size_t b = 0; b < batch; ++b) {
    const auto z = logits.row(b);
    const double zmax = *std::max_element(z.begin(), z.end());
    double denom = 0.0;
    for (double v : z) denom += std::exp(v - zmax);
    const double lse = zmax + std::log(denom);
    out.loss += (lse - z[labels[b]]) * inv_batch;
    auto d = dlogits.row(b);
    for (size_t c = 0; c < num_classes; ++c) d[c] = std::exp(z[c] - lse) * inv_batch;
    d[labels[b]] -= inv_batch;
  }

  // Gradient of a layer given the gradient of its pre-activation output.
  auto layer_grad = [](const DenseLayer& layer, const Tensor2& input,
                       const Tensor2& dz, Vector& flat) {
    const size_t in = layer.in_dim();
    const size_t outd = layer.out_dim();
    const size_t base = flat.size();
    flat.resize(base + layer.num_params(), 0.0);
    for (size_t b = 0; b < dz.rows(); ++b) {
      const auto dzr = dz.row(b);
      const auto xr = input.row(b);
      for (size_t o = 0; o < outd; ++o) {
        const double g = dzr[o];
        if (g == 0.0) continue;
        double* wrow = flat.data() + base + o * in;
        for (size_t i = 0; i < in; ++i) wrow[i] += g * xr[i];
        flat[base + outd * in + o] += g;
      }
    }
  };
  // dX = dZ W.
  auto back_input = [](const DenseLayer& layer, const Tensor2& dz) {
    Tensor2 dx(dz.rows(), layer.in_dim());
    for (size_t b = 0; b < dz.rows(); ++b) {
      const auto dzr = dz.row(b);
      auto dxr = dx.row(b);
      for (size_t o = 0; o < layer.out_dim(); ++o) {
        const double g = dzr[o];
        if (g == 0.0) continue;
        const auto wr = layer.weights.row(o);
        for (size_t i = 0; i < dxr.size(); ++i) dxr[i] += g * wr[i];
      }
    }
    return dx;
  };

  out.grads.grad_h.reserve(model.head_size());
  layer_grad(model.head, acts.back(), dlogits, out.grads.grad_h);

  // Extractor gradients are produced last layer first, then stitched back
  // into forward order.
  std::vector<Vector> per_layer(depth);
  Tensor2 dact = depth > 0 ? back_input(model.head, dlogits) : Tensor2();
  for (size_t k = depth; k-- > 0;) {
    Tensor2& dz = dact;
    if (model.activation == Activation::kRelu) {
      const auto a = acts[k + 1].data();
      auto d = dz.mutable_data();
      for (size_t j = 0; j < d.size(); ++j) {
        if (!(a[j] > 0.0)) d[j] = 0.0;
      }
    }
    layer_grad(model.extractor[k], acts[k], dz, per_layer[k]);
    if (k > 0) dact = back_input(model.extractor[k], dz);
  }
  out.grads.grad_phi.reserve(model.extractor_size());
  for (auto& g : per_layer) {
    out.grads.grad_phi.insert(out.grads.grad_phi.end(), g.begin(), g.end());
  }

  if (!std::isfinite(out.loss)) return absl::OutOfRangeError("non-finite loss");
  for (double g : out.grads.grad_phi) {
    if (!std::isfinite(g)) return absl::OutOfRangeError("non-finite extractor gradient");
  }
  for (double g : out.grads.grad_h) {
    if (!std::isfinite(g)) return absl::OutOfRangeError("non-finite head gradient");
  }
  return out;
}

absl::StatusOr<double> Accuracy(const SplitModel& model, const Tensor2& x,
                                std::span<const int> labels) {
  if (labels.size() != x.rows()) {
    return absl::InvalidArgumentError("label count does not match rows");
  }
  if (x.rows() == 0) return absl::InvalidArgumentError("empty evaluation set");
  auto logits = Forward(model, x);
  if (!logits.ok()) return logits.status();
  size_t correct = 0;
  for (size_t b = 0; b < x.rows(); ++b) {
    const auto z = logits->row(b);
    const auto best = std::max_element(z.begin(), z.end()) - z.begin();
    if (best == labels[b]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(x.rows());
}

Vector FlattenPhi(const SplitModel& model) {
  Vector out;
  out.reserve(model.extractor_size());
  for (const auto& layer : model.extractor) AppendLayer(layer, out);
  return out;
}

Vector FlattenHead(const SplitModel& model) {
  Vector out;
  out.reserve(model.head_size());
  AppendLayer(model.head, out);
  return out;
}

Vector FlattenAll(const SplitModel& model) {
  Vector out = FlattenPhi(model);
  AppendLayer(model.head, out);
  return out;
}

absl::Status UnflattenPhi(std::span<const double> phi, SplitModel& model) {
  if (phi.size() != model.extractor_size()) {
    return absl::InvalidArgumentError(
        absl::StrCat("extractor vector has length ", phi.size(), ", expected ",
                     model.extractor_size()));
  }
  size_t offset = 0;
  for (auto& layer : model.extractor) offset = ReadLayer(phi, offset, layer);
  return absl::OkStatus();
}

absl::Status UnflattenHead(std::span<const double> h, SplitModel& model) {
  if (h.size() != model.head_size()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "head vector has length ", h.size(), ", expected ", model.head_size()));
  }
  ReadLayer(h, 0, model.head);
  return absl::OkStatus();
}

absl::Status UnflattenAll(std::span<const double> theta, SplitModel& model) {
  const size_t d1 = model.extractor_size();
  if (theta.size() != d1 + model.head_size()) {
    return absl::InvalidArgumentError(
        absl::StrCat("parameter vector has length ", theta.size(), ", expected ",
                     d1 + model.head_size()));
  }
  if (auto s = UnflattenPhi(theta.first(d1), model); !s.ok()) return s;
  return UnflattenHead(theta.subspan(d1), model);
}

std::string CheckpointToString(const SplitModel& model) {
  nlohmann::json j;
  j["format"] = std::string(kCheckpointFormat);
  j["version"] = kCheckpointVersion;
  j["activation"] = std::string(ActivationName(model.activation));
  j["extractor"] = nlohmann::json::array();
  for (const auto& layer : model.extractor) j["extractor"].push_back(LayerToJson(layer));
  j["head"] = LayerToJson(model.head);
  return j.dump();
}

absl::StatusOr<SplitModel> CheckpointFromString(absl::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text.begin(), text.end());
    if (j.at("format").get<std::string>() != kCheckpointFormat) {
      return absl::InvalidArgumentError("not a split-MLP checkpoint");
    }
    if (j.at("version").get<int>() != kCheckpointVersion) {
      return absl::InvalidArgumentError(
          absl::StrCat("unsupported checkpoint version ", j.at("version").get<int>()));
    }
    SplitModel model;
    auto act = ParseActivation(j.at("activation").get<std::string>());
    if (!act.ok()) return act.status();
    model.activation = *act;
    for (const auto& lj : j.at("extractor")) {
      auto layer = LayerFromJson(lj);
      if (!layer.ok()) return layer.status();
      model.extractor.push_back(*std::move(layer));
    }
    auto head = LayerFromJson(j.at("head"));
    if (!head.ok()) return head.status();
    model.head = *std::move(head);
    if (auto s = model.Validate(); !s.ok()) return s;
    return model;
  } catch (const nlohmann::json::exception& e) {
    return absl::InvalidArgumentError(absl::StrCat("malformed checkpoint: ", e.what()));
  }
}

absl::Status SaveCheckpoint(const SplitModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) return absl::UnavailableError(absl::StrCat("cannot open ", path, " for writing"));
  out << CheckpointToString(model) << '\n';
  if (!out) return absl::DataLossError(absl::StrCat("write failed: ", path));
  return absl::OkStatus();
}

absl::StatusOr<SplitModel> LoadCheckpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  std::stringstream buf;
  buf << in.rdbuf();
  return CheckpointFromString(buf.str());
}

}  // namespace dpfl
