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
#include <vector>

#include "flowcon/datasets.hpp"
#include "flowcon/flow.hpp"
#include "flowcon/tensor.hpp"

namespace flowcon {

inline constexpr std::uint32_t kPrototypeFormatVersion = 1;

/// Per-class Gaussian (mu_c, sigma_c) obtained by averaging the prior head's
/// per-sample outputs. Rows are sorted by class id; empty classes are absent.
struct ClassPrototypes {
  std::size_t dim = 0;
  std::vector<std::uint32_t> classes;
  nd::Tensor mu;     // [k, d]
  nd::Tensor sigma;  // [k, d], linear domain
  std::vector<std::uint32_t> counts;

  std::size_t k() const noexcept { return classes.size(); }
  void validate() const;

  friend bool operator==(const ClassPrototypes&, const ClassPrototypes&) = default;
};

/// mu and sigma are [N, d] per-sample rows; labels[i] == kUnlabeled rows are
/// skipped. Classes below num_classes without samples are omitted with a warning.
ClassPrototypes prototypes_from_samples(std::span<const std::uint32_t> labels,
                                        const nd::Tensor& mu, const nd::Tensor& sigma,
                                        std::uint32_t num_classes);

ClassPrototypes compute_prototypes(const FlowModel& model, const FeatureDataset& ds);

struct OodScore {
  double score = 0.0;       // max_c log N(z; mu_c, sigma_c)
  std::uint32_t label = 0;  // class attaining the max (smallest on ties)
};

/// Scores an already-transformed latent z_flow.
OodScore score_latent(const ClassPrototypes& protos, std::span<const double> z);

OodScore ood_score(const FlowModel& model, const ClassPrototypes& protos,
                   std::span<const double> x);
std::uint32_t classify(const FlowModel& model, const ClassPrototypes& protos,
                       std::span<const double> x);

namespace serial {
std::vector<OodScore> score_dataset(const FlowModel& model, const ClassPrototypes& protos,
                                    const FeatureDataset& ds);
}
namespace parallel {
std::vector<OodScore> score_dataset(const FlowModel& model, const ClassPrototypes& protos,
                                    const FeatureDataset& ds);
}
/// Picks the parallel path when more than one worker thread is configured.
std::vector<OodScore> score_dataset(const FlowModel& model, const ClassPrototypes& protos,
                                    const FeatureDataset& ds);

/// Fraction of labeled rows whose predicted class matches; unlabeled rows are
/// skipped and counted in `unlabeled`.
struct Accuracy {
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t labeled = 0;
  std::size_t unlabeled = 0;
};
Accuracy accuracy(const FeatureDataset& ds, std::span<const OodScore> scores);

std::vector<std::uint8_t> encode_prototypes(const ClassPrototypes& p);
ClassPrototypes decode_prototypes(std::span<const std::uint8_t> bytes);
void save_prototypes(const ClassPrototypes& p, const std::string& path);
ClassPrototypes load_prototypes(const std::string& path);

}  // namespace flowcon
