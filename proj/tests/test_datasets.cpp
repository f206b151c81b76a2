// Copyright 2026 The FlowCon Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <algorithm>
#include <map>
#include <set>
#include <random>

#include "flowcon/binary_io.hpp"
#include "flowcon/datasets.hpp"
#include "flowcon/errors.hpp"
#include "flowcon/runtime.hpp"
#include "test_util.hpp"

namespace flowcon {
namespace {

FeatureDataset small_dataset() {
  FeatureDataset ds;
  ds.dim = 3;
  ds.num_classes = 2;
  ds.provenance = "unit test";
  ds.push_back(0, std::vector<double>{1.0, 2.0, 3.0});
  ds.push_back(1, std::vector<double>{-1.5, 0.25, 8.0});
  ds.push_back(0, std::vector<double>{0.0, -0.0, 1e-3});
  return ds;
}

TEST(Features, RoundTripThreeRows) {
  const FeatureDataset ds = small_dataset();
  const FeatureDataset back = decode_features(encode_features(ds));
  EXPECT_EQ(back, ds);
  EXPECT_EQ(back.provenance, "unit test");
}

TEST(Features, ByteLayout) {
  const FeatureDataset ds = small_dataset();
  const auto bytes = encode_features(ds);
  const std::size_t header = 4 + 4 * 5 + ds.provenance.size();
  ASSERT_EQ(bytes.size(), header + 3 * (4 + 12) + 4);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "FCFT");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[8], 3);
  EXPECT_EQ(bytes[12], 3);
  EXPECT_EQ(bytes[16], 2);
  EXPECT_EQ(bytes[20], ds.provenance.size());
  // Second record: label 1, then -1.5f = 0xBFC00000 little-endian.
  const std::size_t rec = header + 16;
  EXPECT_EQ(bytes[rec], 1);
  EXPECT_EQ(bytes[rec + 4 + 3], 0xBF);
  EXPECT_EQ(bytes[rec + 4 + 2], 0xC0);
  const std::uint32_t crc = io::crc32({bytes.data(), bytes.size() - 4});
  EXPECT_EQ(bytes[bytes.size() - 4], crc & 0xFF);
}

TEST(Features, CorruptedCrcRejected) {
  auto bytes = encode_features(small_dataset());
  bytes[bytes.size() - 10] ^= 0x40;
  EXPECT_THROW(decode_features(bytes), FormatError);
}

TEST(Features, BadMagicAndTruncation) {
  auto bytes = encode_features(small_dataset());
  auto bad = bytes;
  bad[1] = 'X';
  EXPECT_THROW(decode_features(bad), FormatError);
  EXPECT_THROW(decode_features(std::span(bytes).first(bytes.size() - 7)), FormatError);
}

TEST(Features, EmptyDatasetKeepsDim) {
  FeatureDataset ds;
  ds.dim = 17;
  ds.num_classes = 4;
  const FeatureDataset back = decode_features(encode_features(ds));
  EXPECT_TRUE(back.empty());
  EXPECT_EQ(back.dim, 17u);
  EXPECT_EQ(back.num_classes, 4u);
}

TEST(Features, RandomizedRoundTrips) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int t = 0; t < 100; ++t) {
    FeatureDataset ds;
    ds.dim = 1 + rng() % 20;
    ds.num_classes = 1 + rng() % 10;
    ds.provenance = "run " + std::to_string(t);
    const std::size_t n = rng() % 40;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> x(ds.dim);
      for (double& v : x) v = u(rng);
      const std::uint32_t label = (rng() % 5 == 0) ? kUnlabeled : rng() % ds.num_classes;
      ds.push_back(label, x);
    }
    const auto bytes = encode_features(ds);
    EXPECT_EQ(decode_features(bytes), ds);
    EXPECT_EQ(encode_features(decode_features(bytes)), bytes);
  }
}

TEST(Features, InvalidContentRejected) {
  FeatureDataset ds = small_dataset();
  ds.labels[1] = 5;
  EXPECT_THROW(ds.validate(), InvalidArgument);
  EXPECT_THROW(encode_features(ds), InvalidArgument);
  ds = small_dataset();
  ds.features[4] = std::nanf("");
  EXPECT_THROW(ds.validate(), InvalidArgument);
}

TEST(Features, FileRoundTrip) {
  const auto dir = testing::temp_dir("features");
  const std::string path = (dir / "x.fcft").string();
  write_features(small_dataset(), path);
  EXPECT_EQ(read_features(path), small_dataset());
  EXPECT_THROW(read_features((dir / "none.fcft").string()), IoError);
}

TEST(Moons, NoiselessExample) {
  const FeatureDataset ds = gen_moons(4, 0.0, 1);
  ASSERT_EQ(ds.size(), 4u);
  EXPECT_EQ(ds.dim, 2u);
  EXPECT_EQ(ds.num_classes, 2u);
  std::map<std::uint32_t, int> count;
  for (std::size_t i = 0; i < 4; ++i) {
    ++count[ds.labels[i]];
    const auto x = ds.row_f64(i);
    EXPECT_LT(moons_curve_distance(x[0], x[1]), 1e-6);
  }
  EXPECT_EQ(count[0], 2);
  EXPECT_EQ(count[1], 2);
}

TEST(Moons, NoiselessOnCurves) {
  const FeatureDataset ds = gen_moons(200, 0.0, 2);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto x = ds.row_f64(i);
    if (ds.labels[i] == 0) {
      // Features are stored as f32.
      EXPECT_NEAR(x[0] * x[0] + x[1] * x[1], 1.0, 1e-6);
      EXPECT_GE(x[1], -1e-7);
    } else {
      const double a = 1.0 - x[0], b = 0.5 - x[1];
      EXPECT_NEAR(a * a + b * b, 1.0, 1e-6);
    }
  }
}

TEST(Moons, CurveDistanceOracle) {
  EXPECT_NEAR(moons_curve_distance(0.0, 0.0), std::sqrt(1.25) - 1.0, 1e-12);
  EXPECT_NEAR(moons_curve_distance(0.0, 2.0), 1.0, 1e-12);
  EXPECT_NEAR(moons_curve_distance(1.0, -0.5), 0.0, 1e-12);
  EXPECT_NEAR(moons_curve_distance(-2.0, 0.0), 1.0, 1e-12);
}

TEST(Moons, Deterministic) {
  EXPECT_EQ(gen_moons(100, 0.1, 5), gen_moons(100, 0.1, 5));
  EXPECT_FALSE(gen_moons(100, 0.1, 5) == gen_moons(100, 0.1, 6));
  EXPECT_THROW(gen_moons(5, 0.1, 1), InvalidArgument);
  EXPECT_THROW(gen_moons(4, -0.1, 1), InvalidArgument);
}

TEST(Moons, OodRespectsMargin) {
  const FeatureDataset ood = gen_moons_ood(300, 3);
  ASSERT_EQ(ood.size(), 300u);
  for (std::size_t i = 0; i < ood.size(); ++i) {
    EXPECT_EQ(ood.labels[i], kUnlabeled);
    const auto x = ood.row_f64(i);
    EXPECT_GE(moons_curve_distance(x[0], x[1]), 0.3 - 1e-6);
    EXPECT_GE(x[0], -1.5);
    EXPECT_LE(x[0], 2.5);
    EXPECT_GE(x[1], -1.0);
    EXPECT_LE(x[1], 1.5);
  }
}

TEST(Blobs, ZeroSigmaGivesMeans) {
  const auto means = blob_means(3, 5, 4.0, 7);
  const FeatureDataset ds = gen_blobs(3, 5, 4, 4.0, 0.0, 7);
  ASSERT_EQ(ds.size(), 12u);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto x = ds.row_f64(i);
    for (std::size_t j = 0; j < 5; ++j)
      EXPECT_EQ(x[j], static_cast<double>(static_cast<float>(means[ds.labels[i]][j])));
  }
  for (const auto& m : means) {
    double r = 0;
    for (double v : m) r += v * v;
    EXPECT_NEAR(std::sqrt(r), 4.0, 1e-12);
  }
}

TEST(Blobs, SampleMeanWithinClt) {
  const std::size_t n = 10000, d = 4;
  const double sigma = 1.5;
  const FeatureDataset ds = gen_blobs(1, d, n, 3.0, sigma, 8);
  const auto means = blob_means(1, d, 3.0, 8);
  for (std::size_t j = 0; j < d; ++j) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += ds.row(i)[j];
    EXPECT_LT(std::abs(s / n - means[0][j]), 5 * sigma / std::sqrt(double(n)));
  }
}

TEST(Blobs, SeedsAndErrors) {
  EXPECT_NE(blob_means(4, 3, 1.0, 1), blob_means(4, 3, 1.0, 2));
  EXPECT_EQ(gen_blobs(2, 3, 5, 1.0, 1.0, 3), gen_blobs(2, 3, 5, 1.0, 1.0, 3));
  EXPECT_THROW(gen_blobs(0, 3, 5, 1.0, 1.0, 3), InvalidArgument);
  EXPECT_THROW(gen_blobs(2, 1, 5, 1.0, 1.0, 3), InvalidArgument);
}

TEST(Blobs, OodIsFarFromEveryMean) {
  const auto means = blob_means(5, 8, 4.0, 9);
  const FeatureDataset ood = gen_blob_ood(5, 8, 200, 4.0, 1.0, 9);
  ASSERT_EQ(ood.size(), 200u);
  for (std::size_t i = 0; i < ood.size(); ++i) EXPECT_EQ(ood.labels[i], kUnlabeled);
  std::vector<double> c(8, 0.0);
  for (std::size_t i = 0; i < ood.size(); ++i)
    for (std::size_t j = 0; j < 8; ++j) c[j] += ood.row(i)[j] / 200.0;
  double dist = 0;
  for (std::size_t j = 0; j < 8; ++j) dist += (c[j] - means[0][j]) * (c[j] - means[0][j]);
  EXPECT_NEAR(std::sqrt(dist), 32.0, 1.0);
}

FeatureDataset labelled(std::vector<std::size_t> per_class) {
  FeatureDataset ds;
  ds.dim = 2;
  ds.num_classes = static_cast<std::uint32_t>(per_class.size());
  double v = 0;
  for (std::uint32_t c = 0; c < per_class.size(); ++c)
    for (std::size_t i = 0; i < per_class[c]; ++i, v += 1) ds.push_back(c, std::vector<double>{v, -v});
  return ds;
}

std::multiset<std::pair<std::uint32_t, float>> multiset_of(const FeatureDataset& ds) {
  std::multiset<std::pair<std::uint32_t, float>> s;
  for (std::size_t i = 0; i < ds.size(); ++i) s.insert({ds.labels[i], ds.row(i)[0]});
  return s;
}

TEST(Split, HalfOfTenPerClass) {
  const FeatureDataset ds = labelled({10, 10, 10});
  const auto [train, test] = split(ds, 0.5, 3);
  std::map<std::uint32_t, int> tr, te;
  for (auto l : train.labels) ++tr[l];
  for (auto l : test.labels) ++te[l];
  for (std::uint32_t c = 0; c < 3; ++c) {
    EXPECT_EQ(tr[c], 5);
    EXPECT_EQ(te[c], 5);
  }
}

TEST(Split, PartitionAndDeterminism) {
  const FeatureDataset ds = labelled({13, 7, 22, 3});
  const auto [train, test] = split(ds, 0.7, 11);
  auto all = multiset_of(train);
  const auto t = multiset_of(test);
  all.insert(t.begin(), t.end());
  EXPECT_EQ(all, multiset_of(ds));
  const auto again = split(ds, 0.7, 11);
  EXPECT_EQ(again.first, train);
  EXPECT_EQ(again.second, test);
  EXPECT_FALSE(split(ds, 0.7, 12).first == train);
}

TEST(Split, StratificationBound) {
  const std::vector<std::size_t> sizes{13, 7, 22, 3};
  const FeatureDataset ds = labelled(sizes);
  for (double f : {0.2, 0.5, 0.8}) {
    const auto [train, test] = split(ds, f, 5);
    for (std::uint32_t c = 0; c < sizes.size(); ++c) {
      const double got =
          std::count(train.labels.begin(), train.labels.end(), c) / double(sizes[c]);
      EXPECT_LE(std::abs(got - f), 1.0 / 3.0 + 1e-12);
    }
  }
}

TEST(Split, SingleRowClassGoesToTrainWithWarning) {
  const FeatureDataset ds = labelled({6, 1});
  WarningCapture cap;
  const auto [train, test] = split(ds, 0.5, 1);
  EXPECT_EQ(std::count(train.labels.begin(), train.labels.end(), 1u), 1);
  EXPECT_EQ(std::count(test.labels.begin(), test.labels.end(), 1u), 0);
  EXPECT_EQ(cap.messages().size(), 1u);
  EXPECT_THROW(split(ds, 1.0, 1), InvalidArgument);
  EXPECT_THROW(split(ds, 0.0, 1), InvalidArgument);
}

}  // namespace
}  // namespace flowcon
