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

#include "flowcon/autodiff.hpp"
#include "flowcon/tensor.hpp"

namespace flowcon {

inline constexpr double kDefaultScaleClamp = 2.0;
inline constexpr double kLogSigmaBound = 7.0;

/// Two-layer perceptron: affine -> tanh -> affine, d -> h -> d.
struct Mlp {
  nd::Tensor w1;  // [d, h]
  nd::Tensor b1;  // [h]
  nd::Tensor w2;  // [h, d]
  nd::Tensor b2;  // [d]
};

/// Affine coupling: dims with mask == 1 pass through and condition the
/// scale/shift of the remaining dims.
struct CouplingBlock {
  std::vector<double> mask;
  Mlp scale_net;
  Mlp translate_net;
  double scale_clamp = kDefaultScaleClamp;
};

/// Learned Gaussian prior conditioned on the input embedding:
///   mu = x W_mu + b_mu,  log_sigma = clamp(x W_ls + b_ls, -7, 7).
struct PriorHead {
  nd::Tensor w_mu;        // [d, d]
  nd::Tensor b_mu;        // [d]
  nd::Tensor w_logsigma;  // [d, d]
  nd::Tensor b_logsigma;  // [d]
};

struct FlowModel {
  std::size_t dim = 0;
  std::size_t hidden = 0;
  std::vector<CouplingBlock> blocks;
  PriorHead prior;

  std::size_t num_blocks() const noexcept { return blocks.size(); }
};

struct FlowOutput {
  std::vector<double> z_flow;
  double logdet = 0.0;
  std::vector<double> mu;
  std::vector<double> log_sigma;
};

struct CouplingOutput {
  std::vector<double> y;
  double logdet = 0.0;
};

/// Block `index` conditions on even dims when index is even, odd dims
/// otherwise, so consecutive blocks are complementary.
std::vector<double> alternating_mask(std::size_t dim, std::size_t index);

/// 4*d capped at 1024.
std::size_t default_hidden_width(std::size_t dim);

/// Hidden affines ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)) from the seed's "init"
/// substream; output affines and the prior head start at zero, so the fresh
/// model is the identity map with a N(0, I) prior.
FlowModel init_model(std::size_t dim, std::size_t blocks, std::size_t hidden,
                     std::uint64_t seed, double scale_clamp = kDefaultScaleClamp);

CouplingOutput coupling_forward(const CouplingBlock& block, std::span<const double> x);
std::vector<double> coupling_inverse(const CouplingBlock& block, std::span<const double> y);

FlowOutput flow_forward(const FlowModel& model, std::span<const double> z_emb);
std::vector<double> flow_inverse(const FlowModel& model, std::span<const double> z_flow);

struct NamedParam {
  std::string name;
  nd::Tensor* tensor;
};
struct ConstNamedParam {
  std::string name;
  const nd::Tensor* tensor;
};

/// Stable parameter order: blocks in order (scale net, translate net), then
/// the prior head. Checkpoints and optimizer state use these names.
std::vector<NamedParam> parameters(FlowModel& model);
std::vector<ConstNamedParam> parameters(const FlowModel& model);
std::size_t parameter_count(const FlowModel& model);

/// Node ids of the batched flow inside a training graph.
struct FlowGraph {
  nd::NodeId z = 0;          // [B, d]
  nd::NodeId logdet = 0;     // [B]
  nd::NodeId mu = 0;         // [B, d]
  nd::NodeId log_sigma = 0;  // [B, d]
  std::vector<nd::NodeId> param_leaves;  // parallel to parameters(model)
};

/// Appends the batched forward pass for input node `x` ([B, d]) to `graph`.
FlowGraph build_flow_graph(nd::Graph& graph, const FlowModel& model, nd::NodeId x);

/// Binds every parameter leaf of `fg` to the model's current values.
void bind_parameters(const FlowGraph& fg, const FlowModel& model, nd::LeafBindings& bindings,
                     bool requires_grad);

}  // namespace flowcon
