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

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace flowcon {

inline constexpr std::uint32_t kUnlabeled = 0xFFFFFFFFu;
inline constexpr std::uint32_t kFeatureFormatVersion = 1;

/// Rows of f32 features with u32 labels. Labels are < num_classes or
/// kUnlabeled (OOD files).
struct FeatureDataset {
  std::uint32_t dim = 0;
  std::uint32_t num_classes = 0;
  std::vector<std::uint32_t> labels;
  std::vector<float> features;  // row-major, labels.size() * dim
  std::string provenance;

  std::size_t size() const noexcept { return labels.size(); }
  bool empty() const noexcept { return labels.empty(); }
  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(features).subspan(i * dim, dim);
  }
  std::vector<double> row_f64(std::size_t i) const;

  void push_back(std::uint32_t label, std::span<const double> x);
  FeatureDataset subset(std::span<const std::size_t> indices) const;
  void validate() const;

  friend bool operator==(const FeatureDataset&, const FeatureDataset&) = default;
};

std::vector<std::uint8_t> encode_features(const FeatureDataset& ds);
FeatureDataset decode_features(std::span<const std::uint8_t> bytes);
void write_features(const FeatureDataset& ds, const std::string& path);
FeatureDataset read_features(const std::string& path);

/// Two interleaving half circles: class 0 on (cos t, sin t), class 1 on
/// (1 - cos t, 1/2 - sin t), t ~ U[0, pi], plus N(0, noise^2) per coordinate.
FeatureDataset gen_moons(std::size_t n, double noise, std::uint64_t seed);

/// Distance from p to the nearer of the two noiseless moon curves.
double moons_curve_distance(double x, double y);

/// Uniform points in [-1.5, 2.5] x [-1.0, 1.5] at least `margin` away from
/// both moon curves. Unlabeled.
FeatureDataset gen_moons_ood(std::size_t n, std::uint64_t seed, double margin = 0.3);

/// Class means uniform on the sphere of radius mean_scale.
std::vector<std::vector<double>> blob_means(std::size_t k, std::size_t d, double mean_scale,
                                            std::uint64_t seed);

/// k Gaussian blobs N(mean_c, sigma^2 I), n_per_class rows each.
FeatureDataset gen_blobs(std::size_t k, std::size_t d, std::size_t n_per_class,
                         double mean_scale, double sigma, std::uint64_t seed);

/// One unlabeled blob centred at class 0's mean moved 8 * mean_scale along a
/// random unit direction.
FeatureDataset gen_blob_ood(std::size_t k, std::size_t d, std::size_t n, double mean_scale,
                            double sigma, std::uint64_t seed);

/// Stratified split. Each class sends round(fraction * n_c) rows to train;
/// single-row classes go to train with a warning. Row order is preserved.
std::pair<FeatureDataset, FeatureDataset> split(const FeatureDataset& ds, double train_fraction,
                                                std::uint64_t seed);

}  // namespace flowcon
