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
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "flowcon/datasets.hpp"
#include "flowcon/flow.hpp"
#include "flowcon/loss.hpp"
#include "flowcon/rng.hpp"
#include "flowcon/tensor.hpp"

namespace flowcon {

struct AdamConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;

  void validate() const;
};

struct AdamState {
  AdamConfig cfg;
  std::uint64_t step = 0;
  std::vector<nd::Tensor> m;
  std::vector<nd::Tensor> v;

  /// Zero moments shaped like `params`.
  static AdamState zeros(std::span<nd::Tensor* const> params, const AdamConfig& cfg);
};

/// One Adam step with bias correction. Weight decay is an L2 term added to
/// the gradient before the moment updates.
void adam_step(std::span<nd::Tensor* const> params, std::span<const nd::Tensor> grads,
               AdamState& state);

struct TrainConfig {
  std::size_t epochs = 700;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  LossConfig loss;
  AdamConfig optimizer;
  std::size_t checkpoint_every = 0;  // epochs; 0 = only at the end
  std::size_t log_every = 0;         // steps; 0 = epoch records only

  void validate() const;
};

/// Loss terms and parameter gradients (ordered as parameters(model)) for the
/// rows `indices` of `ds`.
struct BatchResult {
  LossTerms terms;
  std::vector<nd::Tensor> grads;
};
BatchResult batch_loss_and_grads(const FlowModel& model, const FeatureDataset& ds,
                                 std::span<const std::size_t> indices, const LossConfig& cfg);

/// Row ranges of one epoch: a shuffled permutation cut into batch_size pieces;
/// a final piece shorter than 2 rows is dropped.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t rows, std::size_t batch_size,
                                                    Rng& rng);

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  std::size_t steps = 0;
  LossTerms mean;         // weighted by batch size
};

struct StepRecord {
  std::size_t epoch = 0;
  std::uint64_t step = 0;
  LossTerms terms;
};

/// One pass over `ds`. A numeric failure is rethrown naming the batch.
EpochStats train_epoch(FlowModel& model, const FeatureDataset& ds, const TrainConfig& cfg,
                       AdamState& state, Rng& rng, std::size_t epoch,
                       const std::function<void(const StepRecord&)>& on_step = {});

/// Optimizer state plus the number of finished epochs. Shuffling for epoch e
/// uses substream(seed, "shuffle", e), so this is all a resume needs.
struct TrainState {
  AdamState adam;
  std::uint64_t epochs_done = 0;
  std::uint64_t seed = 0;
};

std::vector<std::uint8_t> encode_train_state(const FlowModel& model, const TrainState& st);
TrainState decode_train_state(std::span<const std::uint8_t> bytes, const FlowModel& model);
void save_train_state(const FlowModel& model, const TrainState& st, const std::string& path);
TrainState load_train_state(const std::string& path, const FlowModel& model);

struct FitOptions {
  std::string checkpoint_path;  // empty = no checkpoints; optimizer state goes to <path>.fcos
  std::ostream* log = nullptr;  // JSONL sink
  std::optional<TrainState> resume;
};

struct FitResult {
  std::vector<EpochStats> epochs;
  TrainState state;
};

/// Runs the remaining epochs. Checkpoints are written every checkpoint_every
/// epochs and after the last one; a numeric failure leaves the previous
/// checkpoint in place and propagates.
FitResult fit(FlowModel& model, const FeatureDataset& ds, const TrainConfig& cfg,
              const FitOptions& opts = {});

}  // namespace flowcon
