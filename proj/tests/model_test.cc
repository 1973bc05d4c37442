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

#include <cmath>
#include <filesystem>
#include <random>
#include <vector>

#include "gradient_check.h"
#include "gtest/gtest.h"

namespace dpfl {
namespace {

Tensor2 RandomInputs(size_t rows, size_t cols, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor2 x(rows, cols);
  for (double& v : x.mutable_data()) v = n(rng);
  return x;
}

std::vector<int> RandomLabels(size_t n, int classes, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> u(0, classes - 1);
  std::vector<int> y(n);
  for (int& v : y) v = u(rng);
  return y;
}

SplitModel ZeroModel(size_t in, std::vector<size_t> hidden, size_t classes) {
  auto m = MakeModel(in, hidden, classes, Activation::kRelu, 1);
  for (auto& l : m->extractor) {
    for (double& w : l.weights.mutable_data()) w = 0.0;
  }
  for (double& w : m->head.weights.mutable_data()) w = 0.0;
  return *m;
}

// Straight-line forward pass for a model with exactly one hidden layer.
std::vector<double> ReferenceForward(const SplitModel& m, std::span<const double> x) {
  const DenseLayer& l0 = m.extractor[0];
  std::vector<double> hidden(l0.out_dim());
  for (size_t o = 0; o < l0.out_dim(); ++o) {
    double s = l0.bias[o];
    for (size_t i = 0; i < l0.in_dim(); ++i) s += l0.weights(o, i) * x[i];
    hidden[o] = m.activation == Activation::kRelu ? std::max(0.0, s) : s;
  }
  std::vector<double> out(m.head.out_dim());
  for (size_t o = 0; o < out.size(); ++o) {
    double s = m.head.bias[o];
    for (size_t i = 0; i < hidden.size(); ++i) s += m.head.weights(o, i) * hidden[i];
    out[o] = s;
  }
  return out;
}

TEST(ModelTest, MakeModelShapes) {
  const std::vector<size_t> hidden = {5, 4};
  auto m = MakeModel(3, hidden, 2, Activation::kRelu, 7);
  ASSERT_TRUE(m.ok());
  ASSERT_EQ(m->extractor.size(), 2u);
  EXPECT_EQ(m->extractor_size(), 3u * 5 + 5 + 5 * 4 + 4);
  EXPECT_EQ(m->head_size(), 4u * 2 + 2);
  EXPECT_EQ(m->input_dim(), 3u);
  EXPECT_EQ(m->num_classes(), 2u);
  EXPECT_TRUE(m->Validate().ok());
}

TEST(ModelTest, MakeModelIsDeterministic) {
  const std::vector<size_t> hidden = {6};
  EXPECT_EQ(*MakeModel(4, hidden, 3, Activation::kRelu, 11),
            *MakeModel(4, hidden, 3, Activation::kRelu, 11));
  EXPECT_NE(FlattenAll(*MakeModel(4, hidden, 3, Activation::kRelu, 11)),
            FlattenAll(*MakeModel(4, hidden, 3, Activation::kRelu, 12)));
}

TEST(ModelTest, ValidateRejectsBrokenChain) {
  auto m = MakeModel(3, std::vector<size_t>{4}, 2, Activation::kRelu, 0);
  m->head.weights = Tensor2(2, 5);
  EXPECT_FALSE(m->Validate().ok());
}

TEST(ForwardTest, IdentityLayerPassesInputThrough) {
  SplitModel m;
  m.activation = Activation::kIdentity;
  m.head.weights = *Tensor2::FromData(2, 2, {1, 0, 0, 1});
  m.head.bias = {0, 0};
  auto logits = Forward(m, *Tensor2::FromData(1, 2, {1, 2}));
  ASSERT_TRUE(logits.ok());
  EXPECT_EQ(logits->row(0)[0], 1.0);
  EXPECT_EQ(logits->row(0)[1], 2.0);
}

TEST(ForwardTest, ZeroWeightsGiveZeroLogits) {
  SplitModel m = ZeroModel(4, {3}, 5);
  auto logits = Forward(m, RandomInputs(6, 4, 3));
  ASSERT_TRUE(logits.ok());
  EXPECT_EQ(logits->rows(), 6u);
  EXPECT_EQ(logits->cols(), 5u);
  for (double v : logits->data()) EXPECT_EQ(v, 0.0);
}

TEST(ForwardTest, MatchesStraightLineReference) {
  for (Activation act : {Activation::kRelu, Activation::kIdentity}) {
    auto m = MakeModel(7, std::vector<size_t>{9}, 4, act, 21);
    ASSERT_TRUE(m.ok());
    for (double& b : m->extractor[0].bias) b = 0.1;
    Tensor2 x = RandomInputs(1, 7, 5);
    auto logits = Forward(*m, x);
    ASSERT_TRUE(logits.ok());
    const std::vector<double> ref = ReferenceForward(*m, x.row(0));
    for (size_t k = 0; k < ref.size(); ++k) {
      EXPECT_NEAR(logits->row(0)[k], ref[k], 1e-12 * (1.0 + std::abs(ref[k])));
    }
  }
}

TEST(ForwardTest, ShapeMismatchIsAnError) {
  auto m = MakeModel(3, std::vector<size_t>{4}, 2, Activation::kRelu, 0);
  EXPECT_FALSE(Forward(*m, Tensor2(2, 4)).ok());
}

TEST(LossTest, UniformLogitsGiveLogK) {
  SplitModel m = ZeroModel(4, {3}, 5);
  auto lg = ComputeLossAndGrad(m, RandomInputs(8, 4, 1), RandomLabels(8, 5, 2));
  ASSERT_TRUE(lg.ok());
  EXPECT_NEAR(lg->loss, std::log(5.0), 1e-15);
}

TEST(LossTest, HugeMarginGivesNearZeroLoss) {
  SplitModel m;
  m.activation = Activation::kIdentity;
  m.head.weights = *Tensor2::FromData(2, 2, {100, 0, 0, 100});
  m.head.bias = {0, 0};
  const std::vector<int> y = {0, 1};
  auto lg = ComputeLossAndGrad(m, *Tensor2::FromData(2, 2, {1, 0, 0, 1}), y);
  ASSERT_TRUE(lg.ok());
  EXPECT_GE(lg->loss, 0.0);
  EXPECT_LT(lg->loss, 1e-6);
}

TEST(LossTest, GradientLengthsMatchModel) {
  auto m = MakeModel(5, std::vector<size_t>{6, 3}, 4, Activation::kRelu, 2);
  auto lg = ComputeLossAndGrad(*m, RandomInputs(3, 5, 1), RandomLabels(3, 4, 1));
  ASSERT_TRUE(lg.ok());
  EXPECT_EQ(lg->grads.grad_phi.size(), m->extractor_size());
  EXPECT_EQ(lg->grads.grad_h.size(), m->head_size());
}

TEST(LossTest, MatchesFiniteDifferences) {
  for (uint64_t seed = 0; seed < 5; ++seed) {
    auto m = MakeModel(6, std::vector<size_t>{8, 5}, 3, Activation::kRelu, seed);
    ASSERT_TRUE(m.ok());
    for (auto& l : m->extractor) {
      for (double& b : l.bias) b = 0.05;
    }
    Tensor2 x = RandomInputs(4, 6, 100 + seed);
    std::vector<int> y = RandomLabels(4, 3, 200 + seed);
    auto check = testing::CheckGradients(*m, x, y, 1e-5, 1e-4);
    EXPECT_EQ(check.failures, 0u) << "seed " << seed << " max rel " << check.max_rel_error;
    EXPECT_EQ(check.checked, m->extractor_size() + m->head_size());
  }
}

TEST(LossTest, IdentityActivationMatchesFiniteDifferences) {
  auto m = MakeModel(4, std::vector<size_t>{3}, 3, Activation::kIdentity, 9);
  auto check = testing::CheckGradients(*m, RandomInputs(5, 4, 3), RandomLabels(5, 3, 4), 1e-5,
                                       1e-4);
  EXPECT_EQ(check.failures, 0u) << check.max_rel_error;
}

TEST(LossTest, HeadOnlyModelMatchesFiniteDifferences) {
  auto m = MakeModel(4, std::vector<size_t>{}, 3, Activation::kRelu, 9);
  ASSERT_TRUE(m.ok());
  EXPECT_EQ(m->extractor_size(), 0u);
  auto check = testing::CheckGradients(*m, RandomInputs(5, 4, 3), RandomLabels(5, 3, 4), 1e-5,
                                       1e-4);
  EXPECT_EQ(check.failures, 0u) << check.max_rel_error;
}

TEST(LossTest, ReluSubgradientAtZeroIsZero) {
  // A single hidden unit whose pre-activation is exactly 0 passes no
  // gradient to its incoming weights.
  SplitModel m;
  m.activation = Activation::kRelu;
  m.extractor.push_back({*Tensor2::FromData(1, 1, {1.0}), {0.0}});
  m.head.weights = *Tensor2::FromData(2, 1, {1.0, -1.0});
  m.head.bias = {0.0, 0.0};
  const std::vector<int> y = {0};
  auto lg = ComputeLossAndGrad(m, *Tensor2::FromData(1, 1, {0.0}), y);
  ASSERT_TRUE(lg.ok());
  EXPECT_EQ(lg->grads.grad_phi, (Vector{0.0, 0.0}));
}

TEST(LossTest, RejectsBadInputs) {
  auto m = MakeModel(3, std::vector<size_t>{4}, 2, Activation::kRelu, 0);
  const std::vector<int> none;
  EXPECT_FALSE(ComputeLossAndGrad(*m, Tensor2(0, 3), none).ok());
  const std::vector<int> bad = {2};
  EXPECT_FALSE(ComputeLossAndGrad(*m, Tensor2(1, 3), bad).ok());
  const std::vector<int> short_labels = {0};
  EXPECT_FALSE(ComputeLossAndGrad(*m, Tensor2(2, 3), short_labels).ok());
  Tensor2 nan(1, 3);
  nan(0, 1) = std::nan("");
  EXPECT_FALSE(ComputeLossAndGrad(*m, nan, short_labels).ok());
}

TEST(AccuracyTest, TiesGoToLowestIndex) {
  SplitModel m = ZeroModel(2, {2}, 3);
  const std::vector<int> y = {0, 1};
  EXPECT_EQ(*Accuracy(m, Tensor2(2, 2), y), 0.5);
}

TEST(FlattenTest, RoundTripIsExact) {
  auto m = MakeModel(5, std::vector<size_t>{4, 3}, 2, Activation::kRelu, 3);
  SplitModel copy = *MakeModel(5, std::vector<size_t>{4, 3}, 2, Activation::kRelu, 4);
  ASSERT_TRUE(UnflattenPhi(FlattenPhi(*m), copy).ok());
  ASSERT_TRUE(UnflattenHead(FlattenHead(*m), copy).ok());
  EXPECT_EQ(copy, *m);
  SplitModel copy2 = *MakeModel(5, std::vector<size_t>{4, 3}, 2, Activation::kRelu, 5);
  ASSERT_TRUE(UnflattenAll(FlattenAll(*m), copy2).ok());
  EXPECT_EQ(copy2, *m);
}

TEST(FlattenTest, ZeroModelFlattensToZeros) {
  SplitModel m = ZeroModel(3, {4}, 2);
  EXPECT_EQ(FlattenPhi(m), Vector(m.extractor_size(), 0.0));
}

TEST(FlattenTest, OrderIsWeightsRowMajorThenBias) {
  auto m = MakeModel(3, std::vector<size_t>{4, 2}, 2, Activation::kRelu, 6);
  const Vector before = FlattenPhi(*m);
  m->extractor[0].weights(0, 0) += 1.0;
  Vector after = FlattenPhi(*m);
  for (size_t i = 0; i < before.size(); ++i) {
    if (i == 0) {
      EXPECT_NE(after[i], before[i]);
    } else {
      EXPECT_EQ(after[i], before[i]) << i;
    }
  }
  m->extractor[0].weights(1, 2) += 1.0;  // row 1, col 2 -> 1 * 3 + 2
  after = FlattenPhi(*m);
  EXPECT_NE(after[5], before[5]);
  m->extractor[1].bias[1] += 1.0;  // layer 0 has 12 + 4 entries, layer 1 weights 8
  after = FlattenPhi(*m);
  EXPECT_NE(after[16 + 8 + 1], before[16 + 8 + 1]);
}

TEST(FlattenTest, LengthMismatchIsAnError) {
  auto m = MakeModel(3, std::vector<size_t>{4}, 2, Activation::kRelu, 0);
  EXPECT_FALSE(UnflattenPhi(Vector(3), *m).ok());
  EXPECT_FALSE(UnflattenHead(Vector(3), *m).ok());
  EXPECT_FALSE(UnflattenAll(Vector(3), *m).ok());
}

TEST(CheckpointTest, RoundTripIsExact) {
  auto m = MakeModel(5, std::vector<size_t>{4}, 3, Activation::kIdentity, 8);
  auto back = CheckpointFromString(CheckpointToString(*m));
  ASSERT_TRUE(back.ok()) << back.status();
  EXPECT_EQ(*back, *m);

  const std::string path =
      (std::filesystem::temp_directory_path() / "dpfl_model_test_ckpt.json").string();
  ASSERT_TRUE(SaveCheckpoint(*m, path).ok());
  auto loaded = LoadCheckpoint(path);
  ASSERT_TRUE(loaded.ok());
  EXPECT_EQ(*loaded, *m);
  std::filesystem::remove(path);
}

TEST(CheckpointTest, RejectsGarbage) {
  EXPECT_FALSE(CheckpointFromString("not json").ok());
  EXPECT_FALSE(CheckpointFromString(R"({"format":"other","version":1})").ok());
  EXPECT_FALSE(LoadCheckpoint("/nonexistent/dir/ckpt.json").ok());
}

TEST(ActivationTest, NamesRoundTrip) {
  for (Activation a : {Activation::kRelu, Activation::kIdentity}) {
    EXPECT_EQ(*ParseActivation(ActivationName(a)), a);
  }
  EXPECT_FALSE(ParseActivation("tanh").ok());
}

}  // namespace
}  // namespace dpfl
