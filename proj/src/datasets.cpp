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

#include "flowcon/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "flowcon/binary_io.hpp"
#include "flowcon/errors.hpp"
#include "flowcon/rng.hpp"
#include "flowcon/runtime.hpp"

namespace flowcon {

std::vector<double> FeatureDataset::row_f64(std::size_t i) const {
  const auto r = row(i);
  return std::vector<double>(r.begin(), r.end());
}

void FeatureDataset::push_back(std::uint32_t label, std::span<const double> x) {
  if (x.size() != dim) throw ShapeError("row has " + std::to_string(x.size()) + " values, dim is " +
                                        std::to_string(dim));
  labels.push_back(label);
  for (double v : x) features.push_back(static_cast<float>(v));
}

FeatureDataset FeatureDataset::subset(std::span<const std::size_t> indices) const {
  FeatureDataset out;
  out.dim = dim;
  out.num_classes = num_classes;
  out.provenance = provenance;
  out.labels.reserve(indices.size());
  out.features.reserve(indices.size() * dim);
  for (std::size_t i : indices) {
    if (i >= size()) throw InvalidArgument("subset index out of range");
    out.labels.push_back(labels[i]);
    const auto r = row(i);
    out.features.insert(out.features.end(), r.begin(), r.end());
  }
  return out;
}

void FeatureDataset::validate() const {
  if (features.size() != labels.size() * dim) throw ShapeError("feature buffer size mismatch");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != kUnlabeled && labels[i] >= num_classes) {
      throw InvalidArgument("row " + std::to_string(i) + " has label " +
                            std::to_string(labels[i]) + " >= num_classes " +
                            std::to_string(num_classes));
    }
  }
  for (std::size_t k = 0; k < features.size(); ++k) {
    if (!std::isfinite(features[k])) {
      throw InvalidArgument("non-finite feature in row " + std::to_string(k / std::max(dim, 1u)));
    }
  }
}

std::vector<std::uint8_t> encode_features(const FeatureDataset& ds) {
  ds.validate();
  io::ByteWriter w;
  w.magic("FCFT");
  w.u32(kFeatureFormatVersion);
  w.u32(static_cast<std::uint32_t>(ds.size()));
  w.u32(ds.dim);
  w.u32(ds.num_classes);
  w.string(ds.provenance);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    w.u32(ds.labels[i]);
    for (float v : ds.row(i)) w.f32(v);
  }
  return std::move(w).finish();
}

FeatureDataset decode_features(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  r.expect_magic("FCFT");
  const auto version_at = r.offset();
  const std::uint32_t version = r.u32();
  if (version != kFeatureFormatVersion) {
    throw FormatError("unsupported FCFT version " + std::to_string(version), version_at);
  }
  FeatureDataset ds;
  const std::uint32_t count = r.u32();
  ds.dim = r.u32();
  ds.num_classes = r.u32();
  ds.provenance = r.string();
  ds.labels.reserve(count);
  ds.features.reserve(static_cast<std::size_t>(count) * ds.dim);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto at = r.offset();
    const std::uint32_t label = r.u32();
    if (label != kUnlabeled && label >= ds.num_classes) {
      throw FormatError("label " + std::to_string(label) + " out of range", at);
    }
    ds.labels.push_back(label);
    for (std::uint32_t k = 0; k < ds.dim; ++k) {
      const auto vat = r.offset();
      const float v = r.f32();
      if (!std::isfinite(v)) throw FormatError("non-finite feature", vat);
      ds.features.push_back(v);
    }
  }
  r.expect_end();
  return ds;
}

void write_features(const FeatureDataset& ds, const std::string& path) {
  io::write_file(path, encode_features(ds));
}

FeatureDataset read_features(const std::string& path) {
  return decode_features(io::read_file(path));
}

FeatureDataset gen_moons(std::size_t n, double noise, std::uint64_t seed) {
  if (n < 2 || n % 2 != 0) throw InvalidArgument("gen_moons: n must be even and >= 2");
  if (!(noise >= 0.0)) throw InvalidArgument("gen_moons: noise must be >= 0");
  Rng rng = substream(seed, "synth.moons");
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  std::normal_distribution<double> gauss(0.0, 1.0);

  FeatureDataset ds;
  ds.dim = 2;
  ds.num_classes = 2;
  ds.provenance = "moons n=" + std::to_string(n) + " noise=" + std::to_string(noise) +
                  " seed=" + std::to_string(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t label = i < n / 2 ? 0 : 1;
    const double t = angle(rng);
    double x = std::cos(t);
    double y = std::sin(t);
    if (label == 1) {
      x = 1.0 - x;
      y = 0.5 - y;
    }
    if (noise > 0.0) {
      x += noise * gauss(rng);
      y += noise * gauss(rng);
    }
    const double p[2] = {x, y};
    ds.push_back(label, p);
  }
  return ds;
}

namespace {

// Distance from (x, y) to the upper unit half circle {(cos t, sin t), t in [0, pi]}.
double upper_arc_distance(double x, double y) {
  if (y >= 0.0) return std::abs(std::hypot(x, y) - 1.0);
  return std::min(std::hypot(x - 1.0, y), std::hypot(x + 1.0, y));
}

}  // namespace

double moons_curve_distance(double x, double y) {
  // The second moon is the first one under (x, y) -> (1 - x, 1/2 - y).
  return std::min(upper_arc_distance(x, y), upper_arc_distance(1.0 - x, 0.5 - y));
}

FeatureDataset gen_moons_ood(std::size_t n, std::uint64_t seed, double margin) {
  Rng rng = substream(seed, "synth.moons.ood");
  std::uniform_real_distribution<double> ux(-1.5, 2.5);
  std::uniform_real_distribution<double> uy(-1.0, 1.5);
  FeatureDataset ds;
  ds.dim = 2;
  ds.num_classes = 2;
  ds.provenance = "moons-ood n=" + std::to_string(n) + " seed=" + std::to_string(seed);
  while (ds.size() < n) {
    const double x = ux(rng);
    const double y = uy(rng);
    if (moons_curve_distance(x, y) < margin) continue;
    const double p[2] = {x, y};
    ds.push_back(kUnlabeled, p);
  }
  return ds;
}

namespace {

std::vector<double> random_direction(Rng& rng, std::size_t d) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> v(d);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& x : v) {
      x = gauss(rng);
      norm += x * x;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

void check_blob_args(std::size_t k, std::size_t d, double mean_scale, double sigma) {
  if (k < 1) throw InvalidArgument("blobs: k must be >= 1");
  if (d < 2) throw InvalidArgument("blobs: d must be >= 2");
  if (!(mean_scale >= 0.0) || !(sigma >= 0.0)) {
    throw InvalidArgument("blobs: mean_scale and sigma must be >= 0");
  }
}

}  // namespace

std::vector<std::vector<double>> blob_means(std::size_t k, std::size_t d, double mean_scale,
                                            std::uint64_t seed) {
  check_blob_args(k, d, mean_scale, 0.0);
  Rng rng = substream(seed, "synth.blobs.means");
  std::vector<std::vector<double>> means;
  for (std::size_t c = 0; c < k; ++c) {
    auto v = random_direction(rng, d);
    for (double& x : v) x *= mean_scale;
    means.push_back(std::move(v));
  }
  return means;
}

FeatureDataset gen_blobs(std::size_t k, std::size_t d, std::size_t n_per_class,
                         double mean_scale, double sigma, std::uint64_t seed) {
  check_blob_args(k, d, mean_scale, sigma);
  const auto means = blob_means(k, d, mean_scale, seed);
  Rng rng = substream(seed, "synth.blobs.rows");
  std::normal_distribution<double> gauss(0.0, 1.0);
  FeatureDataset ds;
  ds.dim = static_cast<std::uint32_t>(d);
  ds.num_classes = static_cast<std::uint32_t>(k);
  ds.provenance = "blobs k=" + std::to_string(k) + " d=" + std::to_string(d) +
                  " seed=" + std::to_string(seed);
  std::vector<double> x(d);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t i = 0; i < n_per_class; ++i) {
      for (std::size_t j = 0; j < d; ++j) x[j] = means[c][j] + sigma * gauss(rng);
      ds.push_back(static_cast<std::uint32_t>(c), x);
    }
  }
  return ds;
}

FeatureDataset gen_blob_ood(std::size_t k, std::size_t d, std::size_t n, double mean_scale,
                            double sigma, std::uint64_t seed) {
  check_blob_args(k, d, mean_scale, sigma);
  const auto means = blob_means(k, d, mean_scale, seed);
  Rng rng = substream(seed, "synth.blobs.ood");
  const auto dir = random_direction(rng, d);
  std::vector<double> centre(d);
  for (std::size_t j = 0; j < d; ++j) centre[j] = means[0][j] + 8.0 * mean_scale * dir[j];

  std::normal_distribution<double> gauss(0.0, 1.0);
  FeatureDataset ds;
  ds.dim = static_cast<std::uint32_t>(d);
  ds.num_classes = static_cast<std::uint32_t>(k);
  ds.provenance = "blobs-ood k=" + std::to_string(k) + " d=" + std::to_string(d) +
                  " seed=" + std::to_string(seed);
  std::vector<double> x(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) x[j] = centre[j] + sigma * gauss(rng);
    ds.push_back(kUnlabeled, x);
  }
  return ds;
}

std::pair<FeatureDataset, FeatureDataset> split(const FeatureDataset& ds, double train_fraction,
                                                std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw InvalidArgument("split: train_fraction must be in (0, 1)");
  }
  // Unlabeled rows form their own stratum.
  const std::size_t strata = static_cast<std::size_t>(ds.num_classes) + 1;
  std::vector<std::vector<std::size_t>> by_class(strata);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const std::uint32_t l = ds.labels[i];
    by_class[l == kUnlabeled ? ds.num_classes : l].push_back(i);
  }
  Rng rng = substream(seed, "split");
  std::vector<char> to_train(ds.size(), 0);
  for (std::size_t c = 0; c < strata; ++c) {
    auto& idx = by_class[c];
    if (idx.empty()) continue;
    if (idx.size() == 1) {
      warn("split: class " + std::to_string(c) + " has a single row; assigned to train");
      to_train[idx[0]] = 1;
      continue;
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_train = static_cast<std::size_t>(
        std::llround(train_fraction * static_cast<double>(idx.size())));
    for (std::size_t i = 0; i < n_train; ++i) to_train[idx[i]] = 1;
  }
  std::vector<std::size_t> train_idx, test_idx;
  for (std::size_t i = 0; i < ds.size(); ++i) (to_train[i] ? train_idx : test_idx).push_back(i);
  return {ds.subset(train_idx), ds.subset(test_idx)};
}

}  // namespace flowcon
