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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "flowcon/datasets.hpp"
#include "flowcon/errors.hpp"
#include "flowcon/loss.hpp"
#include "flowcon/oodscore.hpp"
#include "flowcon/runtime.hpp"
#include "test_util.hpp"

namespace flowcon {
namespace {

using nd::Tensor;

ClassPrototypes make_protos(std::vector<std::vector<double>> mu,
                            std::vector<std::vector<double>> sigma) {
  ClassPrototypes p;
  const std::size_t k = mu.size(), d = mu[0].size();
  p.dim = d;
  p.mu = Tensor({k, d});
  p.sigma = Tensor({k, d});
  for (std::size_t c = 0; c < k; ++c) {
    p.classes.push_back(static_cast<std::uint32_t>(c));
    p.counts.push_back(1);
    for (std::size_t j = 0; j < d; ++j) {
      p.mu.at(c, j) = mu[c][j];
      p.sigma.at(c, j) = sigma[c][j];
    }
  }
  return p;
}

double oracle_density(const std::vector<double>& z, const ClassPrototypes& p, std::size_t c) {
  double s = 0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    const double u = (z[j] - p.mu.at(c, j)) / p.sigma.at(c, j);
    s += -std::log(p.sigma.at(c, j)) - 0.5 * std::log(2 * M_PI) - 0.5 * u * u;
  }
  return s;
}

TEST(Prototypes, SingleSample) {
  const auto p = prototypes_from_samples(std::vector<std::uint32_t>{0},
                                         Tensor::matrix(1, 2, {0.3, -0.7}),
                                         Tensor::matrix(1, 2, {1.5, 0.2}), 1);
  EXPECT_EQ(p.mu, Tensor::matrix(1, 2, {0.3, -0.7}));
  EXPECT_EQ(p.sigma, Tensor::matrix(1, 2, {1.5, 0.2}));
  EXPECT_EQ(p.counts, std::vector<std::uint32_t>{1});
}

TEST(Prototypes, MeanOfTwo) {
  const auto p = prototypes_from_samples(std::vector<std::uint32_t>{0, 0},
                                         Tensor::matrix(2, 2, {0, 2, 2, 0}),
                                         Tensor::matrix(2, 2, {1, 1, 1, 1}), 1);
  EXPECT_EQ(p.mu, Tensor::matrix(1, 2, {1, 1}));
}

TEST(Prototypes, LinearSigmaMean) {
  const auto p = prototypes_from_samples(std::vector<std::uint32_t>{0, 0, 0},
                                         Tensor::matrix(3, 2, {0, 0, 0, 0, 0, 0}),
                                         Tensor::matrix(3, 2, {1, 1, 2, 2, 3, 3}), 1);
  EXPECT_EQ(p.sigma, Tensor::matrix(1, 2, {2, 2}));
  EXPECT_EQ(p.counts, std::vector<std::uint32_t>{3});
}

TEST(Prototypes, EmptyClassOmittedWithWarning) {
  WarningCapture cap;
  const auto p = prototypes_from_samples(std::vector<std::uint32_t>{2, 0, kUnlabeled, 2},
                                         Tensor::matrix(4, 1, {1, 2, 99, 3}),
                                         Tensor::matrix(4, 1, {1, 1, 1, 1}), 3);
  EXPECT_EQ(p.classes, (std::vector<std::uint32_t>{0, 2}));
  EXPECT_EQ(p.mu, Tensor::matrix(2, 1, {2, 2}));
  EXPECT_EQ(p.counts, (std::vector<std::uint32_t>{1, 2}));
  EXPECT_EQ(cap.messages().size(), 1u);
  EXPECT_THROW(prototypes_from_samples(std::vector<std::uint32_t>{kUnlabeled},
                                       Tensor::matrix(1, 1, {0}), Tensor::matrix(1, 1, {1}), 1),
               InvalidArgument);
}

TEST(Prototypes, PermutationInvariant) {
  const FlowModel m = testing::random_model(3, 2, 5, 4);
  const FeatureDataset ds = gen_blobs(3, 3, 20, 2.0, 1.0, 5);
  std::vector<std::size_t> perm(ds.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  std::swap(perm[3], perm[40]);
  const auto a = compute_prototypes(m, ds);
  const auto b = compute_prototypes(m, ds.subset(perm));
  for (std::size_t i = 0; i < a.mu.numel(); ++i) {
    EXPECT_NEAR(a.mu[i], b.mu[i], 1e-14);
    EXPECT_NEAR(a.sigma[i], b.sigma[i], 1e-14);
  }
}

TEST(Prototypes, IdentityModelGivesStandardNormal) {
  const FlowModel m = init_model(4, 3, 6, 1);
  const FeatureDataset ds = gen_blobs(3, 4, 10, 3.0, 1.0, 2);
  const auto p = compute_prototypes(m, ds);
  ASSERT_EQ(p.k(), 3u);
  for (std::size_t i = 0; i < p.mu.numel(); ++i) {
    EXPECT_EQ(p.mu[i], 0.0);
    EXPECT_EQ(p.sigma[i], 1.0);
  }
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto x = ds.row_f64(i);
    double want = 0;
    for (double v : x) want += -0.5 * std::log(2 * M_PI) - 0.5 * v * v;
    EXPECT_NEAR(ood_score(m, p, x).score, want, 1e-12);
  }
}

TEST(Score, TwoPrototypeExamples) {
  const FlowModel m = init_model(2, 1, 2, 0);
  // d = 1 is below the flow's minimum, so score the latent directly.
  const auto p = make_protos({{0.0}, {4.0}}, {{1.0}, {1.0}});
  OodScore s = score_latent(p, std::vector<double>{0.0});
  EXPECT_NEAR(s.score, -0.9189385, 1e-7);
  EXPECT_EQ(s.label, 0u);
  s = score_latent(p, std::vector<double>{2.0});
  EXPECT_NEAR(s.score, -2.9189385, 1e-7);
  EXPECT_EQ(s.label, 0u);

  // The same cases through the identity flow at d = 2 with a shared second dim.
  const auto p2 = make_protos({{0.0, 0.0}, {4.0, 0.0}}, {{1.0, 1.0}, {1.0, 1.0}});
  EXPECT_EQ(classify(m, p2, std::vector<double>{0.0, 0.0}), 0u);
  EXPECT_EQ(classify(m, p2, std::vector<double>{2.0, 0.0}), 0u);
  EXPECT_EQ(classify(m, p2, std::vector<double>{2.0 + 1e-9, 0.0}), 1u);
}

TEST(Score, MatchesBruteForce) {
  std::mt19937_64 rng(3);
  const FlowModel m = testing::random_model(3, 2, 4, 6);
  const auto mu = testing::random_tensor({4, 3}, rng, -2, 2);
  const auto sg = testing::random_tensor({4, 3}, rng, 0.3, 2.0);
  ClassPrototypes p = make_protos({{0, 0, 0}, {0, 0, 0}, {0, 0, 0}, {0, 0, 0}},
                                  {{1, 1, 1}, {1, 1, 1}, {1, 1, 1}, {1, 1, 1}});
  p.mu = mu;
  p.sigma = sg;
  for (int t = 0; t < 50; ++t) {
    const auto x = testing::random_vector(3, rng, -3, 3);
    const auto z = flow_forward(m, x).z_flow;
    double best = -INFINITY;
    std::uint32_t arg = 0;
    for (std::size_t c = 0; c < 4; ++c) {
      const double v = oracle_density(z, p, c);
      if (v > best) best = v, arg = static_cast<std::uint32_t>(c);
    }
    const OodScore s = ood_score(m, p, x);
    EXPECT_NEAR(s.score, best, 1e-12);
    EXPECT_EQ(s.label, arg);
    EXPECT_EQ(classify(m, p, x), s.label);
  }
}

TEST(Score, WellSeparatedMeanWins) {
  const FlowModel m = init_model(2, 1, 2, 0);
  const auto p = make_protos({{0, 0}, {6, 0}, {0, 6}}, {{1, 1}, {1, 1}, {1, 1}});
  for (std::uint32_t c = 0; c < 3; ++c)
    EXPECT_EQ(classify(m, p, p.mu.row(c)), c);
}

TEST(Score, LogDomainPreservesRawOrdering) {
  std::mt19937_64 rng(8);
  const FlowModel m = testing::random_model(2, 2, 4, 9);
  const auto p = make_protos({{0, 0}, {1.5, -1}}, {{1, 0.5}, {0.7, 1.2}});
  std::vector<double> logs;
  for (int i = 0; i < 1000; ++i)
    logs.push_back(ood_score(m, p, testing::random_vector(2, rng, -3, 3)).score);
  std::vector<std::size_t> order(logs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return logs[a] < logs[b]; });
  for (std::size_t i = 1; i < order.size(); ++i)
    EXPECT_LE(std::exp(logs[order[i - 1]]), std::exp(logs[order[i]]));
}

TEST(Score, DimensionMismatch) {
  const FlowModel m = init_model(3, 1, 2, 0);
  const auto p = make_protos({{0, 0, 0}}, {{1, 1, 1}});
  EXPECT_THROW(ood_score(m, p, std::vector<double>{1, 2}), InvalidArgument);
  const auto p2 = make_protos({{0, 0}}, {{1, 1}});
  EXPECT_THROW(ood_score(m, p2, std::vector<double>{1, 2, 3}), InvalidArgument);
}

TEST(Score, SerialAndParallelAgree) {
  const FlowModel m = testing::random_model(4, 2, 6, 10);
  const FeatureDataset ds = gen_blobs(3, 4, 30, 2.0, 1.0, 11);
  const auto p = compute_prototypes(m, ds);
  const auto a = serial::score_dataset(m, p, ds);
  set_worker_threads(3);
  const auto b = parallel::score_dataset(m, p, ds);
  set_worker_threads(1);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].score, b[i].score);
    EXPECT_EQ(a[i].label, b[i].label);
  }
}

TEST(Accuracy, CountsLabeledRows) {
  FeatureDataset ds;
  ds.dim = 2;
  ds.num_classes = 2;
  for (std::uint32_t l : {0u, 1u, 1u, kUnlabeled}) ds.push_back(l, std::vector<double>{0, 0});
  const std::vector<OodScore> s{{0, 0}, {0, 0}, {0, 1}, {0, 1}};
  const Accuracy a = accuracy(ds, s);
  EXPECT_EQ(a.correct, 2u);
  EXPECT_EQ(a.labeled, 3u);
  EXPECT_EQ(a.unlabeled, 1u);
  EXPECT_DOUBLE_EQ(a.accuracy, 2.0 / 3.0);

  FeatureDataset ood;
  ood.dim = 2;
  ood.push_back(kUnlabeled, std::vector<double>{0, 0});
  EXPECT_THROW(accuracy(ood, std::vector<OodScore>{{0, 0}}), InvalidArgument);
}

TEST(PrototypeFile, RoundTripAndIntegrity) {
  std::mt19937_64 rng(12);
  ClassPrototypes p = make_protos({{0, 0, 0}, {0, 0, 0}}, {{1, 1, 1}, {1, 1, 1}});
  p.classes = {3, 7};
  p.counts = {10, 4};
  p.mu = testing::random_tensor({2, 3}, rng);
  p.sigma = testing::random_tensor({2, 3}, rng, 0.1, 2);
  const auto bytes = encode_prototypes(p);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "FCPT");
  EXPECT_EQ(bytes.size(), 4 + 4 * 3 + 2 * (4 + 3 * 8 * 2 + 4) + 4u);
  EXPECT_EQ(decode_prototypes(bytes), p);

  const auto dir = testing::temp_dir("protos");
  save_prototypes(p, (dir / "p.fcpt").string());
  EXPECT_EQ(load_prototypes((dir / "p.fcpt").string()), p);

  auto bad = bytes;
  bad[20] ^= 1;
  EXPECT_THROW(decode_prototypes(bad), FormatError);

  p.sigma[0] = 0.0;
  EXPECT_THROW(p.validate(), InvalidArgument);
}

}  // namespace
}  // namespace flowcon
