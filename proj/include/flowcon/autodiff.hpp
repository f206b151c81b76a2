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
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "flowcon/tensor.hpp"

namespace flowcon::nd {

using NodeId = std::size_t;

enum class OpKind {
  kLeaf,
  kConstant,
  kAdd,        // same shape, or rhs/lhs a trailing-axis vector or a scalar
  kMul,        // same broadcast rules as kAdd
  kMatMul,     // [m,k] x [k,n]
  kAffine,     // x[m,k] * w[k,n] + b[n]
  kTranspose,  // rank-2
  kTanh,
  kExp,
  kLog,
  kSquare,
  kNeg,
  kAddScalar,
  kMulScalar,
  kSum,        // all elements -> scalar
  kSumLast,    // reduce the last axis
  kMean,       // all elements -> scalar
  kSlice,      // [begin, end) along the last axis
  kConcat,     // along the last axis
  kClamp,      // elementwise clamp to [lo, hi]
  kLogSumExp,  // masked log-sum-exp along the last axis
};

std::string_view op_name(OpKind kind);

/// Leaf bindings: leaf id -> value. Leaves whose bound tensor has
/// requires_grad() set receive gradients.
using LeafBindings = std::unordered_map<NodeId, Tensor>;
using Gradients = std::map<NodeId, Tensor>;

/// A static computation graph over Tensors with a reverse-mode sweep.
///
/// Nodes are appended in topological order by the builder methods, so the
/// graph is acyclic by construction. Shapes are only known once leaves are
/// bound, hence shape checking happens in evaluate().
class Graph {
 public:
  NodeId leaf(std::string name);
  NodeId constant(Tensor value);

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b) { return add(a, neg(b)); }
  NodeId mul(NodeId a, NodeId b);
  NodeId matmul(NodeId a, NodeId b);
  NodeId affine(NodeId x, NodeId w, NodeId b);
  NodeId transpose(NodeId a);
  NodeId tanh(NodeId a);
  NodeId exp(NodeId a);
  NodeId log(NodeId a);
  NodeId square(NodeId a);
  NodeId neg(NodeId a);
  NodeId add_scalar(NodeId a, double c);
  NodeId mul_scalar(NodeId a, double c);
  NodeId sum(NodeId a);
  NodeId sum_last(NodeId a);
  NodeId mean(NodeId a);
  NodeId slice(NodeId a, std::size_t begin, std::size_t end);
  NodeId concat(NodeId a, NodeId b);
  NodeId clamp(NodeId a, double lo, double hi);
  /// log sum_j mask[.., j] * exp(a[.., j]); `mask` is a 0/1 tensor of a's
  /// shape. Every output row must keep at least one entry.
  NodeId logsumexp(NodeId a, Tensor mask);

  /// Runs the forward sweep and returns the value of `root` (the most
  /// recently added node by default). Intermediates are cached for
  /// gradients().
  const Tensor& evaluate(const LeafBindings& bindings);
  const Tensor& evaluate(const LeafBindings& bindings, NodeId root);

  /// Reverse sweep from a scalar `root`. Returns d root / d leaf for every
  /// leaf bound with requires_grad.
  Gradients gradients(NodeId root) const;
  Gradients gradients() const { return gradients(nodes_.size() - 1); }

  const Tensor& value(NodeId id) const;
  std::size_t size() const noexcept { return nodes_.size(); }
  OpKind kind(NodeId id) const { return nodes_.at(id).kind; }
  const std::string& leaf_name(NodeId id) const { return nodes_.at(id).name; }
  std::vector<NodeId> leaves() const;

 private:
  struct Node {
    OpKind kind = OpKind::kLeaf;
    std::vector<NodeId> inputs{};
    double p0 = 0.0;
    double p1 = 0.0;
    std::size_t i0 = 0;
    std::size_t i1 = 0;
    Tensor attr{};  // constant value or logsumexp mask
    std::string name{};
    Tensor value{};
    bool needs_grad = false;
  };

  NodeId push(Node node);
  void forward_node(NodeId id);
  void backward_node(NodeId id, std::vector<Tensor>& grads,
                     std::vector<bool>& live) const;
  std::string describe(NodeId id) const;

  std::vector<Node> nodes_;
  bool evaluated_ = false;
};

/// Central differences (f(x + h e_k) - f(x - h e_k)) / 2h per coordinate.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double h);

}  // namespace flowcon::nd
