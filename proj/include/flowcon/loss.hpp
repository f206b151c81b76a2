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
#include <vector>

#include "flowcon/autodiff.hpp"
#include "flowcon/tensor.hpp"

namespace flowcon {

inline constexpr double kHalfLog2Pi = 0.91893853320467274178;

struct LossConfig {
  double tau1 = 1.5;
  double tau2 = 0.1;
  double lambda = 0.07;
  double exponent_clamp = 40.0;
  // false trains the likelihood term alone (total = lambda * L_flow).
  bool contrastive = true;

  void validate() const;
};

/// One mini-batch of flow outputs with labels; rows align across fields.
struct BatchLatent {
  nd::Tensor z;          // [B, d]
  nd::Tensor logdet;     // [B]
  nd::Tensor mu;         // [B, d]
  nd::Tensor log_sigma;  // [B, d]
  std::vector<std::uint32_t> labels;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return z.cols(); }
  void validate() const;
};

struct LossTerms {
  double total = 0.0;
  double l_con = 0.0;
  double l_flow = 0.0;
};

/// Diagonal Gaussian log-density, summed over dimensions.
double gaussian_logpdf(std::span<const double> z, std::span<const double> mu,
                       std::span<const double> log_sigma);

/// Batch mean of -(log p(z | mu, sigma) + logdet).
double flow_nll(const BatchLatent& batch);

/// g = exp(clamp(tau1 * (ll_i / d + ll_j / d), -E, E)); both log-likelihoods
/// are taken under the anchor's distribution.
double similarity_logit(double ll_i, double ll_j, const LossConfig& cfg, std::size_t dim);

/// Supervised likelihood-contrastive loss with softmax temperature tau2.
/// Anchors without positives contribute zero.
double contrastive_loss(const BatchLatent& batch, const LossConfig& cfg);

LossTerms total_loss(const BatchLatent& batch, const LossConfig& cfg);

struct LossGraph {
  nd::NodeId total = 0;
  nd::NodeId l_con = 0;
  nd::NodeId l_flow = 0;
};

/// Differentiable version of total_loss over graph nodes z [B,d], logdet [B],
/// mu [B,d], log_sigma [B,d]. Labels are baked in as constants.
LossGraph build_loss_graph(nd::Graph& graph, nd::NodeId z, nd::NodeId logdet, nd::NodeId mu,
                           nd::NodeId log_sigma, std::span<const std::uint32_t> labels,
                           std::size_t dim, const LossConfig& cfg);

}  // namespace flowcon
