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
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <vector>

#include "gtest/gtest.h"

namespace dpfl {
namespace {

std::vector<size_t> Iota(size_t n) {
  std::vector<size_t> v(n);
  std::iota(v.begin(), v.end(), size_t{0});
  return v;
}

std::string TempPath(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

// Nearest-centroid classifier fit on `train`, scored on `test`.
double CentroidAccuracy(const Dataset& train, const Dataset& test) {
  const size_t k = static_cast<size_t>(train.num_classes);
  Tensor2 centroids(k, train.dim());
  std::vector<double> counts(k, 0.0);
  for (size_t i = 0; i < train.size(); ++i) {
    const size_t y = static_cast<size_t>(train.labels[i]);
    Axpy(1.0, train.features.row(i), centroids.row(y));
    counts[y] += 1.0;
  }
  for (size_t c = 0; c < k; ++c) {
    for (double& v : centroids.row(c)) v /= counts[c];
  }
  size_t correct = 0;
  for (size_t i = 0; i < test.size(); ++i) {
    size_t best = 0;
    double best_d = INFINITY;
    for (size_t c = 0; c < k; ++c) {
      double d = 0.0;
      for (size_t j = 0; j < test.dim(); ++j) {
        const double diff = test.features(i, j) - centroids(c, j);
        d += diff * diff;
      }
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    if (static_cast<int>(best) == test.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

TEST(SyntheticTest, Size) {
  auto ds = GenerateSynthetic({.num_classes = 3, .per_class = 5, .dim = 4, .seed = 1});
  ASSERT_TRUE(ds.ok());
  EXPECT_EQ(ds->size(), 15u);
  EXPECT_EQ(ds->dim(), 4u);
  EXPECT_EQ(ds->num_classes, 3);
  EXPECT_TRUE(ds->Validate().ok());
}

TEST(SyntheticTest, DeterministicPerSeed) {
  SyntheticSpec spec{.num_classes = 4, .per_class = 10, .dim = 3, .seed = 8};
  auto a = GenerateSynthetic(spec);
  auto b = GenerateSynthetic(spec);
  EXPECT_EQ(a->features, b->features);
  EXPECT_EQ(a->labels, b->labels);
  spec.seed = 9;
  EXPECT_NE(GenerateSynthetic(spec)->features, a->features);
}

TEST(SyntheticTest, RejectsBadSpecs) {
  EXPECT_FALSE(GenerateSynthetic({.num_classes = 1, .per_class = 5, .dim = 4}).ok());
  EXPECT_FALSE(GenerateSynthetic({.num_classes = 3, .per_class = 5, .dim = 0}).ok());
}

TEST(SyntheticTest, WellSeparatedClassesAreNearlyPerfectlyClassifiable) {
  auto ds = GenerateSynthetic(
      {.num_classes = 10, .per_class = 200, .dim = 16, .class_separation = 10.0, .seed = 3});
  ASSERT_TRUE(ds.ok());
  auto split = SplitTrainTest(Iota(ds->size()), 0.5, 4);
  ASSERT_TRUE(split.ok());
  EXPECT_GT(CentroidAccuracy(ds->Subset(split->train), ds->Subset(split->test)), 0.99);
}

TEST(SyntheticTest, ZeroSeparationIsChanceLevel) {
  auto ds = GenerateSynthetic(
      {.num_classes = 4, .per_class = 500, .dim = 8, .class_separation = 0.0, .seed = 3});
  ASSERT_TRUE(ds.ok());
  auto split = SplitTrainTest(Iota(ds->size()), 0.5, 4);
  const double acc = CentroidAccuracy(ds->Subset(split->train), ds->Subset(split->test));
  EXPECT_NEAR(acc, 0.25, 0.05);
}

TEST(SyntheticTest, SamplingIsShiftEquivariant) {
  Tensor2 means(3, 4);
  for (size_t i = 0; i < means.size(); ++i) means.mutable_data()[i] = 0.1 * i;
  Tensor2 shifted = means;
  const std::vector<double> c = {5.0, -1.0, 0.25, 100.0};
  for (size_t k = 0; k < 3; ++k) Axpy(1.0, c, shifted.row(k));
  const Dataset a = SampleBlobs(means, 20, 77);
  const Dataset b = SampleBlobs(shifted, 20, 77);
  ASSERT_EQ(a.size(), b.size());
  EXPECT_EQ(a.labels, b.labels);
  for (size_t i = 0; i < a.size(); ++i) {
    for (size_t j = 0; j < 4; ++j) {
      EXPECT_NEAR(b.features(i, j), a.features(i, j) + c[j], 1e-12);
    }
  }
}

void ExpectValidPartition(const Dataset& ds, const ClientIndices& parts, int s) {
  std::set<size_t> seen;
  size_t total = 0;
  for (const auto& p : parts) {
    std::set<int> classes;
    for (size_t i : p) {
      ASSERT_LT(i, ds.size());
      classes.insert(ds.labels[i]);
    }
    EXPECT_EQ(static_cast<int>(classes.size()), s);
    seen.insert(p.begin(), p.end());
    total += p.size();
  }
  EXPECT_EQ(seen.size(), total) << "client shards overlap";
}

TEST(PartitionTest, PaperSetting) {
  auto ds = GenerateSynthetic({.num_classes = 10, .per_class = 400, .dim = 2, .seed = 1});
  auto parts = PartitionPathological(*ds, {.num_clients = 1000, .classes_per_client = 2, .seed = 5});
  ASSERT_TRUE(parts.ok()) << parts.status();
  ASSERT_EQ(parts->size(), 1000u);
  ExpectValidPartition(*ds, *parts, 2);
}

TEST(PartitionTest, AllClassesPerClient) {
  auto ds = GenerateSynthetic({.num_classes = 5, .per_class = 40, .dim = 2, .seed = 1});
  auto parts = PartitionPathological(*ds, {.num_clients = 8, .classes_per_client = 5, .seed = 2});
  ASSERT_TRUE(parts.ok());
  ExpectValidPartition(*ds, *parts, 5);
}

TEST(PartitionTest, UnevenClassLoads) {
  auto ds = GenerateSynthetic({.num_classes = 7, .per_class = 30, .dim = 2, .seed = 1});
  auto parts = PartitionPathological(*ds, {.num_clients = 9, .classes_per_client = 3, .seed = 2});
  ASSERT_TRUE(parts.ok());
  ExpectValidPartition(*ds, *parts, 3);
}

TEST(PartitionTest, Deterministic) {
  auto ds = GenerateSynthetic({.num_classes = 10, .per_class = 50, .dim = 2, .seed = 1});
  PartitionSpec spec{.num_clients = 20, .classes_per_client = 2, .seed = 11};
  EXPECT_EQ(*PartitionPathological(*ds, spec), *PartitionPathological(*ds, spec));
  spec.seed = 12;
  EXPECT_NE(*PartitionPathological(*ds, spec),
            *PartitionPathological(*ds, {.num_clients = 20, .classes_per_client = 2, .seed = 11}));
}

TEST(PartitionTest, Infeasible) {
  auto ds = GenerateSynthetic({.num_classes = 10, .per_class = 5, .dim = 2, .seed = 1});
  EXPECT_FALSE(
      PartitionPathological(*ds, {.num_clients = 100, .classes_per_client = 2, .seed = 1}).ok());
  EXPECT_FALSE(
      PartitionPathological(*ds, {.num_clients = 2, .classes_per_client = 11, .seed = 1}).ok());
  EXPECT_FALSE(
      PartitionPathological(*ds, {.num_clients = 2, .classes_per_client = 0, .seed = 1}).ok());
}

TEST(PartitionTest, ManifestJson) {
  const ClientIndices parts = {{0, 2}, {1}};
  const nlohmann::json j = PartitionManifest(parts);
  EXPECT_EQ(j["0"], nlohmann::json({0, 2}));
  EXPECT_EQ(j["1"], nlohmann::json({1}));
}

TEST(SplitTest, NinetyTen) {
  auto s = SplitTrainTest(Iota(10), 0.9, 1);
  ASSERT_TRUE(s.ok());
  EXPECT_EQ(s->train.size(), 9u);
  EXPECT_EQ(s->test.size(), 1u);
}

TEST(SplitTest, IsAPartitionOfTheShard) {
  std::vector<size_t> shard = {3, 9, 27, 81, 4, 16, 64};
  auto s = SplitTrainTest(shard, 0.6, 2);
  ASSERT_TRUE(s.ok());
  std::vector<size_t> both = s->train;
  both.insert(both.end(), s->test.begin(), s->test.end());
  std::sort(both.begin(), both.end());
  std::sort(shard.begin(), shard.end());
  EXPECT_EQ(both, shard);
  EXPECT_TRUE(std::is_sorted(s->train.begin(), s->train.end()));
}

TEST(SplitTest, Rejections) {
  EXPECT_FALSE(SplitTrainTest(Iota(10), 1.0, 1).ok());
  EXPECT_FALSE(SplitTrainTest(Iota(10), 0.0, 1).ok());
  EXPECT_FALSE(SplitTrainTest(Iota(1), 0.5, 1).ok());
}

TEST(SplitTest, BothSidesNonEmpty) {
  auto s = SplitTrainTest(Iota(3), 0.99, 1);
  ASSERT_TRUE(s.ok());
  EXPECT_EQ(s->test.size(), 1u);
}

TEST(CsvTest, ParseExample) {
  auto ds = ParseCsv("1.0,2.0,0\n3.0,4.0,1");
  ASSERT_TRUE(ds.ok());
  EXPECT_EQ(ds->size(), 2u);
  EXPECT_EQ(ds->dim(), 2u);
  EXPECT_EQ(ds->num_classes, 2);
  EXPECT_EQ(ds->features(1, 0), 3.0);
}

TEST(CsvTest, EmptyInputIsAnError) {
  EXPECT_FALSE(ParseCsv("").ok());
  EXPECT_FALSE(ParseCsv("\n\n").ok());
}

TEST(CsvTest, MalformedRowsReportLineNumbers) {
  auto bad = ParseCsv("1,2,0\n1,x,1\n");
  ASSERT_FALSE(bad.ok());
  EXPECT_NE(bad.status().message().find("line 2"), std::string::npos);
  auto ragged = ParseCsv("1,2,0\n1,1\n");
  ASSERT_FALSE(ragged.ok());
  EXPECT_NE(ragged.status().message().find("line 2"), std::string::npos);
  EXPECT_FALSE(ParseCsv("1,2,-1\n").ok());
  EXPECT_FALSE(ParseCsv("1,2,0.5\n").ok());
}

TEST(CsvTest, WriteLoadRoundTrip) {
  auto ds = GenerateSynthetic({.num_classes = 3, .per_class = 7, .dim = 5, .seed = 2});
  const std::string path = TempPath("dpfl_data_test.csv");
  ASSERT_TRUE(WriteCsv(*ds, path).ok());
  auto back = LoadCsv(path);
  ASSERT_TRUE(back.ok());
  EXPECT_EQ(back->labels, ds->labels);
  ASSERT_EQ(back->features.size(), ds->features.size());
  for (size_t i = 0; i < ds->features.size(); ++i) {
    EXPECT_NEAR(back->features.data()[i], ds->features.data()[i], 1e-9);
  }
  std::filesystem::remove(path);
}

TEST(CsvTest, MissingFile) {
  EXPECT_FALSE(LoadCsv("/nonexistent/file.csv").ok());
}

TEST(DatasetTest, ValidateAndSubset) {
  auto ds = ParseCsv("1,0\n2,1\n3,0\n");
  ASSERT_TRUE(ds.ok());
  const std::vector<size_t> idx = {2, 1};
  const Dataset sub = ds->Subset(idx);
  EXPECT_EQ(sub.labels, (std::vector<int>{0, 1}));
  EXPECT_EQ(sub.features(0, 0), 3.0);
  Dataset broken = *ds;
  broken.labels[0] = 5;
  EXPECT_FALSE(broken.Validate().ok());
}

}  // namespace
}  // namespace dpfl
