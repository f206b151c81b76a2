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

#include <json.hpp>

#include "flowcon/datasets.hpp"
#include "flowcon/flow.hpp"
#include "flowcon/oodscore.hpp"

namespace flowcon {

// Scores follow "higher = more in-distribution"; a sample is accepted as ID
// when its score is >= the threshold.

/// Mann-Whitney: P(id > ood) + P(id == ood) / 2.
double auroc(std::span<const double> id, std::span<const double> ood);

enum class Positive { kId, kOod };

/// Average precision sum_n (R_n - R_{n-1}) P_n over distinct thresholds, tied
/// scores forming one threshold. kOod ranks by negated score.
double aupr(std::span<const double> id, std::span<const double> ood, Positive positive);

/// FPR at the largest threshold t with #{id >= t} / |id| >= tpr_target.
double fpr_at_tpr(std::span<const double> id, std::span<const double> ood,
                  double tpr_target = 0.95);

struct OodMetrics {
  double auroc = 0.0;
  double aupr_s = 0.0;
  double aupr_e = 0.0;
  double fpr95 = 0.0;
};
OodMetrics compute_metrics(std::span<const double> id, std::span<const double> ood);

struct Subsample {
  FeatureDataset rows;
  bool shortfall = false;  // fewer rows available than requested
};

/// floor(ratio * id_test_count) rows drawn without replacement from the
/// "subsample" stream `index` of `seed`.
Subsample subsample_ood(const FeatureDataset& ood, std::size_t id_test_count, double ratio,
                        std::uint64_t seed, std::uint64_t index = 0);

struct Histogram {
  std::vector<double> edges;  // bins + 1 ascending edges
  std::vector<std::uint32_t> id_counts;
  std::vector<std::uint32_t> ood_counts;

  std::size_t bins() const noexcept { return id_counts.size(); }
  std::string to_csv() const;
};

/// Uniform bins over the pooled [min, max]; the maximum lands in the last bin.
Histogram histogram(std::span<const double> id, std::span<const double> ood,
                    std::size_t bins = 100);

struct EvalOptions {
  std::uint64_t seed = 0;
  double ratio = 0.2;
  std::size_t bins = 100;
  double tpr_target = 0.95;
};

struct EvalReport {
  std::string name;
  OodMetrics metrics;
  std::size_t id_count = 0;
  std::size_t ood_count = 0;
  std::size_t ood_available = 0;
  std::uint64_t seed = 0;
  double ratio = 0.0;
  std::vector<std::string> warnings;
  Histogram hist;

  nlohmann::ordered_json to_json() const;
};

struct SuiteResult {
  std::vector<EvalReport> per_set;
  EvalReport mean;
  std::vector<std::string> errors;  // skipped pairings
};

/// Scores the ID test set once, then each OOD set after subsampling (stream
/// index = position in `ood_sets`). The mean report averages the four metrics
/// over the evaluated sets with equal weight.
SuiteResult evaluate_suite(const FlowModel& model, const ClassPrototypes& protos,
                           const FeatureDataset& id_test,
                           const std::vector<std::pair<std::string, FeatureDataset>>& ood_sets,
                           const EvalOptions& opts);

/// Same protocol over precomputed ID and OOD scores.
EvalReport evaluate_scores(std::string name, std::span<const double> id,
                           std::span<const double> ood, const EvalOptions& opts);

std::vector<double> score_values(std::span<const OodScore> scores);

}  // namespace flowcon
