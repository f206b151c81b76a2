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

#include "flowcon/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "flowcon/errors.hpp"

namespace flowcon {

using nd::NodeId;
using nd::Tensor;

void LossConfig::validate() const {
  if (!(tau1 > 0.0)) throw InvalidArgument("tau1 must be positive");
  if (!(tau2 > 0.0)) throw InvalidArgument("tau2 must be positive");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidArgument("lambda must be >= 0");
  if (!(exponent_clamp > 0.0)) throw InvalidArgument("exponent_clamp must be positive");
}

void BatchLatent::validate() const {
  const std::size_t b = labels.size();
  if (b == 0) throw InvalidArgument("empty batch");
  if (z.rank() != 2 || z.shape()[0] != b) throw ShapeError("z must be [B, d]");
  if (mu.shape() != z.shape() || log_sigma.shape() != z.shape()) {
    throw ShapeError("mu and log_sigma must match z's shape");
  }
  if (logdet.rank() != 1 || logdet.numel() != b) throw ShapeError("logdet must be [B]");
}

double gaussian_logpdf(std::span<const double> z, std::span<const double> mu,
                       std::span<const double> log_sigma) {
  if (mu.size() != z.size() || log_sigma.size() != z.size()) {
    throw ShapeError("gaussian_logpdf: length mismatch");
  }
  double acc = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    const double u = (z[k] - mu[k]) * std::exp(-log_sigma[k]);
    acc += -log_sigma[k] - kHalfLog2Pi - 0.5 * u * u;
  }
  if (!std::isfinite(acc)) throw NumericError("gaussian_logpdf: non-finite result");
  return acc;
}

double flow_nll(const BatchLatent& batch) {
  batch.validate();
  double acc = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    acc -= gaussian_logpdf(batch.z.row(i), batch.mu.row(i), batch.log_sigma.row(i)) +
           batch.logdet[i];
  }
  return acc / static_cast<double>(batch.size());
}

double similarity_logit(double ll_i, double ll_j, const LossConfig& cfg, std::size_t dim) {
  const double d = static_cast<double>(dim);
  const double e = cfg.exponent_clamp;
  return std::exp(std::clamp(cfg.tau1 * (ll_i / d + ll_j / d), -e, e));
}

double contrastive_loss(const BatchLatent& batch, const LossConfig& cfg) {
  batch.validate();
  const std::size_t b = batch.size();
  if (b < 2) throw InvalidArgument("contrastive loss needs a batch of at least 2");
  const std::size_t d = batch.dim();

  double total = 0.0;
  std::vector<double> logits(b);
  for (std::size_t i = 0; i < b; ++i) {
    std::size_t positives = 0;
    for (std::size_t j = 0; j < b; ++j) {
      if (j != i && batch.labels[j] == batch.labels[i]) ++positives;
    }
    if (positives == 0) continue;

    const auto mu = batch.mu.row(i);
    const auto ls = batch.log_sigma.row(i);
    const double ll_self = gaussian_logpdf(batch.z.row(i), mu, ls);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < b; ++j) {
      if (j == i) continue;
      const double ll_j = gaussian_logpdf(batch.z.row(j), mu, ls);
      logits[j] = similarity_logit(ll_self, ll_j, cfg, d) / cfg.tau2;
      mx = std::max(mx, logits[j]);
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < b; ++j) {
      if (j != i) denom += std::exp(logits[j] - mx);
    }
    const double lse = mx + std::log(denom);
    double pos = 0.0;
    for (std::size_t j = 0; j < b; ++j) {
      if (j != i && batch.labels[j] == batch.labels[i]) pos += logits[j] - lse;
    }
    total -= pos / static_cast<double>(positives);
  }
  if (!std::isfinite(total)) throw NumericError("contrastive loss is non-finite");
  return total;
}

LossTerms total_loss(const BatchLatent& batch, const LossConfig& cfg) {
  cfg.validate();
  LossTerms t;
  t.l_flow = flow_nll(batch);
  t.l_con = cfg.contrastive ? contrastive_loss(batch, cfg) : 0.0;
  t.total = t.l_con + cfg.lambda * t.l_flow;
  return t;
}

LossGraph build_loss_graph(nd::Graph& g, NodeId z, NodeId logdet, NodeId mu, NodeId log_sigma,
                           std::span<const std::uint32_t> labels, std::size_t dim,
                           const LossConfig& cfg) {
  cfg.validate();
  const std::size_t b = labels.size();
  if (b == 0) throw InvalidArgument("empty batch");
  const double d = static_cast<double>(dim);

  // Self log-likelihood of each row under its own prior: [B].
  const NodeId inv_sigma = g.exp(g.neg(log_sigma));
  const NodeId u = g.mul(g.sub(z, mu), inv_sigma);
  const NodeId per_dim =
      g.add_scalar(g.add(g.neg(log_sigma), g.mul_scalar(g.square(u), -0.5)), -kHalfLog2Pi);
  const NodeId ll_self = g.sum_last(per_dim);

  LossGraph out;
  out.l_flow = g.mean(g.neg(g.add(ll_self, logdet)));

  if (!cfg.contrastive) {
    out.l_con = g.constant(Tensor::scalar(0.0));
    out.total = g.mul_scalar(out.l_flow, cfg.lambda);
    return out;
  }
  if (b < 2) throw InvalidArgument("contrastive loss needs a batch of at least 2");

  // Cross log-likelihoods, transposed: llt[j, i] = log N(z_j; mu_i, sigma_i).
  // Expanding the square turns the pairwise sum into two matmuls:
  //   sum_k (z_jk - mu_ik)^2 P_ik = (z^2 P^T)_ji - 2 (z (mu P)^T)_ji + sum_k mu_ik^2 P_ik
  // with P = sigma^-2.
  const NodeId prec = g.exp(g.mul_scalar(log_sigma, -2.0));
  const NodeId quad = g.matmul(g.square(z), g.transpose(prec));
  const NodeId cross = g.matmul(z, g.transpose(g.mul(mu, prec)));
  const NodeId anchor_const = g.add_scalar(
      g.sum_last(g.add(g.neg(log_sigma), g.mul_scalar(g.mul(g.square(mu), prec), -0.5))),
      -d * kHalfLog2Pi);
  const NodeId llt = g.add(g.add(g.mul_scalar(quad, -0.5), cross), anchor_const);

  // similarity g[i, j] = exp(clamp(tau1 / d * (ll_self_i + ll_ij)))
  const NodeId arg = g.clamp(g.mul_scalar(g.add(llt, ll_self), cfg.tau1 / d),
                             -cfg.exponent_clamp, cfg.exponent_clamp);
  const NodeId logits = g.mul_scalar(g.transpose(g.exp(arg)), 1.0 / cfg.tau2);

  Tensor others({b, b});
  Tensor positive_weight({b, b});
  Tensor has_positive({b});
  for (std::size_t i = 0; i < b; ++i) {
    std::size_t positives = 0;
    for (std::size_t j = 0; j < b; ++j) {
      if (j == i) continue;
      others.at(i, j) = 1.0;
      if (labels[j] == labels[i]) ++positives;
    }
    if (positives == 0) continue;
    has_positive[i] = 1.0;
    for (std::size_t j = 0; j < b; ++j) {
      if (j != i && labels[j] == labels[i]) {
        positive_weight.at(i, j) = 1.0 / static_cast<double>(positives);
      }
    }
  }
  const NodeId lse = g.logsumexp(logits, std::move(others));
  const NodeId denom_term = g.sum(g.mul(lse, g.constant(std::move(has_positive))));
  const NodeId pos_term = g.sum(g.mul(logits, g.constant(std::move(positive_weight))));
  out.l_con = g.sub(denom_term, pos_term);
  out.total = g.add(out.l_con, g.mul_scalar(out.l_flow, cfg.lambda));
  return out;
}

}  // namespace flowcon
