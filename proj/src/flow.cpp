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

#include "flowcon/flow.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "flowcon/errors.hpp"
#include "flowcon/rng.hpp"

namespace flowcon {

using nd::Tensor;

std::vector<double> alternating_mask(std::size_t dim, std::size_t index) {
  std::vector<double> mask(dim, 0.0);
  for (std::size_t j = 0; j < dim; ++j) mask[j] = (j % 2 == index % 2) ? 1.0 : 0.0;
  return mask;
}

std::size_t default_hidden_width(std::size_t dim) { return std::min<std::size_t>(4 * dim, 1024); }

namespace {

Tensor uniform_tensor(nd::Shape shape, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = dist(rng);
  return t;
}

Mlp init_mlp(std::size_t d, std::size_t h, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  Mlp m;
  m.w1 = uniform_tensor({d, h}, bound, rng);
  m.b1 = uniform_tensor({h}, bound, rng);
  m.w2 = Tensor({h, d});
  m.b2 = Tensor({d});
  return m;
}

// out = b + x W, accumulated in the same order as the graph's affine node.
void affine_row(std::span<const double> x, const Tensor& w, const Tensor& b,
                std::span<double> out) {
  const std::size_t k = x.size(), n = out.size();
  std::copy(b.data().begin(), b.data().end(), out.begin());
  for (std::size_t p = 0; p < k; ++p) {
    const double xv = x[p];
    for (std::size_t j = 0; j < n; ++j) out[j] += xv * w[p * n + j];
  }
}

void mlp_row(const Mlp& net, std::span<const double> x, std::span<double> hidden,
             std::span<double> out) {
  affine_row(x, net.w1, net.b1, hidden);
  for (double& v : hidden) v = std::tanh(v);
  affine_row(hidden, net.w2, net.b2, out);
}

// Scale and shift of the transformed dims given the pass-through input.
struct ScaleShift {
  std::vector<double> s;
  std::vector<double> t;
};

ScaleShift scale_shift(const CouplingBlock& block, std::span<const double> x) {
  const std::size_t d = x.size();
  const std::size_t h = block.scale_net.b1.numel();
  std::vector<double> xm(d), hidden(h);
  for (std::size_t j = 0; j < d; ++j) xm[j] = x[j] * block.mask[j];
  ScaleShift out{std::vector<double>(d), std::vector<double>(d)};
  mlp_row(block.scale_net, xm, hidden, out.s);
  mlp_row(block.translate_net, xm, hidden, out.t);
  const double c = block.scale_clamp;
  const double inv_c = 1.0 / c;
  for (std::size_t j = 0; j < d; ++j) {
    const double keep = 1.0 - block.mask[j];
    out.s[j] = std::tanh(out.s[j] * inv_c) * c * keep;
    out.t[j] = out.t[j] * keep;
  }
  return out;
}

void check_dim(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw InvalidArgument(std::string(what) + ": expected dimension " + std::to_string(want) +
                          ", got " + std::to_string(got));
  }
}

void check_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string(what) + " produced a non-finite value");
  }
}

}  // namespace

FlowModel init_model(std::size_t dim, std::size_t blocks, std::size_t hidden,
                     std::uint64_t seed, double scale_clamp) {
  if (dim < 2) throw InvalidArgument("flow dimension must be >= 2");
  if (blocks < 1) throw InvalidArgument("flow needs at least one coupling block");
  if (hidden < 1) throw InvalidArgument("hidden width must be >= 1");
  if (!(scale_clamp > 0.0)) throw InvalidArgument("scale clamp must be positive");

  Rng rng = substream(seed, "init");
  FlowModel model;
  model.dim = dim;
  model.hidden = hidden;
  model.blocks.reserve(blocks);
  for (std::size_t k = 0; k < blocks; ++k) {
    CouplingBlock b;
    b.mask = alternating_mask(dim, k);
    b.scale_net = init_mlp(dim, hidden, rng);
    b.translate_net = init_mlp(dim, hidden, rng);
    b.scale_clamp = scale_clamp;
    model.blocks.push_back(std::move(b));
  }
  model.prior.w_mu = Tensor({dim, dim});
  model.prior.b_mu = Tensor({dim});
  model.prior.w_logsigma = Tensor({dim, dim});
  model.prior.b_logsigma = Tensor({dim});
  return model;
}

CouplingOutput coupling_forward(const CouplingBlock& block, std::span<const double> x) {
  check_dim(x.size(), block.mask.size(), "coupling_forward");
  const ScaleShift st = scale_shift(block, x);
  CouplingOutput out{std::vector<double>(x.size()), 0.0};
  for (std::size_t j = 0; j < x.size(); ++j) {
    out.y[j] = x[j] * std::exp(st.s[j]) + st.t[j];
    out.logdet += st.s[j];
  }
  check_finite(out.y, "coupling_forward");
  return out;
}

std::vector<double> coupling_inverse(const CouplingBlock& block, std::span<const double> y) {
  check_dim(y.size(), block.mask.size(), "coupling_inverse");
  // Pass-through dims of y equal those of x, so s and t are recoverable.
  const ScaleShift st = scale_shift(block, y);
  std::vector<double> x(y.size());
  for (std::size_t j = 0; j < y.size(); ++j) x[j] = (y[j] - st.t[j]) * std::exp(-st.s[j]);
  check_finite(x, "coupling_inverse");
  return x;
}

FlowOutput flow_forward(const FlowModel& model, std::span<const double> z_emb) {
  check_dim(z_emb.size(), model.dim, "flow_forward");
  FlowOutput out;
  out.z_flow.assign(z_emb.begin(), z_emb.end());
  for (const CouplingBlock& block : model.blocks) {
    CouplingOutput step = coupling_forward(block, out.z_flow);
    out.z_flow = std::move(step.y);
    out.logdet += step.logdet;
  }
  out.mu.resize(model.dim);
  out.log_sigma.resize(model.dim);
  affine_row(z_emb, model.prior.w_mu, model.prior.b_mu, out.mu);
  affine_row(z_emb, model.prior.w_logsigma, model.prior.b_logsigma, out.log_sigma);
  for (double& v : out.log_sigma) v = std::clamp(v, -kLogSigmaBound, kLogSigmaBound);
  check_finite(out.mu, "flow_forward prior");
  return out;
}

std::vector<double> flow_inverse(const FlowModel& model, std::span<const double> z_flow) {
  check_dim(z_flow.size(), model.dim, "flow_inverse");
  std::vector<double> x(z_flow.begin(), z_flow.end());
  for (auto it = model.blocks.rbegin(); it != model.blocks.rend(); ++it) {
    x = coupling_inverse(*it, x);
  }
  return x;
}

namespace {

template <typename Model, typename Out>
void collect_parameters(Model& model, Out& out) {
  for (std::size_t k = 0; k < model.blocks.size(); ++k) {
    auto& b = model.blocks[k];
    const std::string p = "block" + std::to_string(k) + ".";
    out.push_back({p + "scale.w1", &b.scale_net.w1});
    out.push_back({p + "scale.b1", &b.scale_net.b1});
    out.push_back({p + "scale.w2", &b.scale_net.w2});
    out.push_back({p + "scale.b2", &b.scale_net.b2});
    out.push_back({p + "translate.w1", &b.translate_net.w1});
    out.push_back({p + "translate.b1", &b.translate_net.b1});
    out.push_back({p + "translate.w2", &b.translate_net.w2});
    out.push_back({p + "translate.b2", &b.translate_net.b2});
  }
  out.push_back({"prior.w_mu", &model.prior.w_mu});
  out.push_back({"prior.b_mu", &model.prior.b_mu});
  out.push_back({"prior.w_logsigma", &model.prior.w_logsigma});
  out.push_back({"prior.b_logsigma", &model.prior.b_logsigma});
}

}  // namespace

std::vector<NamedParam> parameters(FlowModel& model) {
  std::vector<NamedParam> out;
  collect_parameters(model, out);
  return out;
}

std::vector<ConstNamedParam> parameters(const FlowModel& model) {
  std::vector<ConstNamedParam> out;
  collect_parameters(model, out);
  return out;
}

std::size_t parameter_count(const FlowModel& model) {
  std::size_t n = 0;
  for (const auto& p : parameters(model)) n += p.tensor->numel();
  return n;
}

FlowGraph build_flow_graph(nd::Graph& g, const FlowModel& model, nd::NodeId x) {
  FlowGraph fg;
  for (const auto& p : parameters(model)) fg.param_leaves.push_back(g.leaf(p.name));

  auto mlp = [&](nd::NodeId in, std::size_t first_leaf) {
    const auto& leaf = fg.param_leaves;
    nd::NodeId h = g.tanh(g.affine(in, leaf[first_leaf], leaf[first_leaf + 1]));
    return g.affine(h, leaf[first_leaf + 2], leaf[first_leaf + 3]);
  };

  nd::NodeId z = x;
  std::optional<nd::NodeId> logdet;
  for (std::size_t k = 0; k < model.blocks.size(); ++k) {
    const CouplingBlock& b = model.blocks[k];
    std::vector<double> keep(b.mask.size());
    for (std::size_t j = 0; j < keep.size(); ++j) keep[j] = 1.0 - b.mask[j];
    const nd::NodeId mask = g.constant(Tensor::vector(b.mask));
    const nd::NodeId keep_node = g.constant(Tensor::vector(keep));

    const nd::NodeId xm = g.mul(z, mask);
    const std::size_t base = 8 * k;
    nd::NodeId s = mlp(xm, base);
    s = g.mul(g.mul_scalar(g.tanh(g.mul_scalar(s, 1.0 / b.scale_clamp)), b.scale_clamp), keep_node);
    const nd::NodeId t = g.mul(mlp(xm, base + 4), keep_node);
    z = g.add(g.mul(z, g.exp(s)), t);
    const nd::NodeId block_logdet = g.sum_last(s);
    logdet = logdet ? g.add(*logdet, block_logdet) : block_logdet;
  }
  fg.z = z;
  fg.logdet = *logdet;

  const std::size_t pb = 8 * model.blocks.size();
  const auto& leaf = fg.param_leaves;
  fg.mu = g.affine(x, leaf[pb], leaf[pb + 1]);
  fg.log_sigma = g.clamp(g.affine(x, leaf[pb + 2], leaf[pb + 3]), -kLogSigmaBound, kLogSigmaBound);
  return fg;
}

void bind_parameters(const FlowGraph& fg, const FlowModel& model, nd::LeafBindings& bindings,
                     bool requires_grad) {
  const auto params = parameters(model);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = *params[i].tensor;
    t.set_requires_grad(requires_grad);
    bindings.insert_or_assign(fg.param_leaves[i], std::move(t));
  }
}

}  // namespace flowcon
