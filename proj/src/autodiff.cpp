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

#include "flowcon/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "flowcon/errors.hpp"
#include "flowcon/kernels.hpp"

namespace flowcon::nd {

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kConstant: return "constant";
    case OpKind::kAdd: return "add";
    case OpKind::kMul: return "multiply";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kAffine: return "affine";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kTanh: return "tanh";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kSquare: return "square";
    case OpKind::kNeg: return "negate";
    case OpKind::kAddScalar: return "add_scalar";
    case OpKind::kMulScalar: return "mul_scalar";
    case OpKind::kSum: return "sum";
    case OpKind::kSumLast: return "sum_last";
    case OpKind::kMean: return "mean";
    case OpKind::kSlice: return "slice";
    case OpKind::kConcat: return "concat";
    case OpKind::kClamp: return "clamp";
    case OpKind::kLogSumExp: return "logsumexp";
  }
  return "?";
}

namespace {

enum class Bcast { kSame, kRowB, kScalarB, kRowA, kScalarA };

bool is_row_of(const Shape& vec, const Shape& big) {
  return vec.size() == 1 && big.size() >= 2 && vec[0] == big.back();
}

std::optional<Bcast> broadcast_mode(const Shape& a, const Shape& b) {
  if (a == b) return Bcast::kSame;
  if (b.empty()) return Bcast::kScalarB;
  if (a.empty()) return Bcast::kScalarA;
  if (is_row_of(b, a)) return Bcast::kRowB;
  if (is_row_of(a, b)) return Bcast::kRowA;
  return std::nullopt;
}

// Index of the broadcast operand for flat output index e.
inline std::size_t small_index(Bcast mode, std::size_t e, std::size_t cols) {
  switch (mode) {
    case Bcast::kRowA:
    case Bcast::kRowB: return e % cols;
    case Bcast::kScalarA:
    case Bcast::kScalarB: return 0;
    case Bcast::kSame: return e;
  }
  return e;
}

// dst (shape of one operand) += reduction of full (output-shaped) gradient.
void reduce_into(Tensor& dst, const Tensor& full) {
  auto d = dst.data();
  auto f = full.data();
  if (dst.shape() == full.shape()) {
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += f[i];
  } else if (dst.rank() == 0) {
    double acc = 0.0;
    for (double v : f) acc += v;
    d[0] += acc;
  } else {
    const std::size_t cols = dst.numel();
    const std::size_t rows = full.numel() / cols;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < cols; ++j) d[j] += f[r * cols + j];
    }
  }
}

Shape drop_last(const Shape& s) { return Shape(s.begin(), s.end() - 1); }

}  // namespace

NodeId Graph::push(Node node) {
  for (NodeId in : node.inputs) {
    if (in >= nodes_.size()) {
      throw InvalidArgument("node input " + std::to_string(in) + " does not exist");
    }
  }
  nodes_.push_back(std::move(node));
  evaluated_ = false;
  return nodes_.size() - 1;
}

NodeId Graph::leaf(std::string name) {
  Node n{.kind = OpKind::kLeaf};
  n.name = std::move(name);
  return push(std::move(n));
}

NodeId Graph::constant(Tensor value) {
  Node n{.kind = OpKind::kConstant};
  n.attr = std::move(value);
  return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) { return push({.kind = OpKind::kAdd, .inputs = {a, b}}); }
NodeId Graph::mul(NodeId a, NodeId b) { return push({.kind = OpKind::kMul, .inputs = {a, b}}); }
NodeId Graph::matmul(NodeId a, NodeId b) {
  return push({.kind = OpKind::kMatMul, .inputs = {a, b}});
}
NodeId Graph::affine(NodeId x, NodeId w, NodeId b) {
  return push({.kind = OpKind::kAffine, .inputs = {x, w, b}});
}
NodeId Graph::transpose(NodeId a) { return push({.kind = OpKind::kTranspose, .inputs = {a}}); }
NodeId Graph::tanh(NodeId a) { return push({.kind = OpKind::kTanh, .inputs = {a}}); }
NodeId Graph::exp(NodeId a) { return push({.kind = OpKind::kExp, .inputs = {a}}); }
NodeId Graph::log(NodeId a) { return push({.kind = OpKind::kLog, .inputs = {a}}); }
NodeId Graph::square(NodeId a) { return push({.kind = OpKind::kSquare, .inputs = {a}}); }
NodeId Graph::neg(NodeId a) { return push({.kind = OpKind::kNeg, .inputs = {a}}); }
NodeId Graph::add_scalar(NodeId a, double c) {
  return push({.kind = OpKind::kAddScalar, .inputs = {a}, .p0 = c});
}
NodeId Graph::mul_scalar(NodeId a, double c) {
  return push({.kind = OpKind::kMulScalar, .inputs = {a}, .p0 = c});
}
NodeId Graph::sum(NodeId a) { return push({.kind = OpKind::kSum, .inputs = {a}}); }
NodeId Graph::sum_last(NodeId a) { return push({.kind = OpKind::kSumLast, .inputs = {a}}); }
NodeId Graph::mean(NodeId a) { return push({.kind = OpKind::kMean, .inputs = {a}}); }
NodeId Graph::slice(NodeId a, std::size_t begin, std::size_t end) {
  return push({.kind = OpKind::kSlice, .inputs = {a}, .i0 = begin, .i1 = end});
}
NodeId Graph::concat(NodeId a, NodeId b) {
  return push({.kind = OpKind::kConcat, .inputs = {a, b}});
}
NodeId Graph::clamp(NodeId a, double lo, double hi) {
  if (!(lo <= hi)) throw InvalidArgument("clamp requires lo <= hi");
  return push({.kind = OpKind::kClamp, .inputs = {a}, .p0 = lo, .p1 = hi});
}
NodeId Graph::logsumexp(NodeId a, Tensor mask) {
  Node n{.kind = OpKind::kLogSumExp, .inputs = {a}};
  n.attr = std::move(mask);
  return push(std::move(n));
}

std::vector<NodeId> Graph::leaves() const {
  std::vector<NodeId> out;
  for (NodeId i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].kind == OpKind::kLeaf) out.push_back(i);
  }
  return out;
}

const Tensor& Graph::value(NodeId id) const {
  if (!evaluated_) throw StateError("graph has not been evaluated");
  return nodes_.at(id).value;
}

std::string Graph::describe(NodeId id) const {
  const Node& n = nodes_[id];
  std::string s = "node " + std::to_string(id) + " (" + std::string(op_name(n.kind));
  if (!n.name.empty()) s += " '" + n.name + "'";
  return s + ")";
}

const Tensor& Graph::evaluate(const LeafBindings& bindings) {
  if (nodes_.empty()) throw StateError("cannot evaluate an empty graph");
  return evaluate(bindings, nodes_.size() - 1);
}

const Tensor& Graph::evaluate(const LeafBindings& bindings, NodeId root) {
  if (root >= nodes_.size()) throw InvalidArgument("root node does not exist");
  evaluated_ = false;
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    Node& n = nodes_[id];
    if (n.kind == OpKind::kLeaf) {
      auto it = bindings.find(id);
      if (it == bindings.end()) throw StateError(describe(id) + " is unbound");
      n.value = it->second;
      n.needs_grad = it->second.requires_grad();
      if (!n.value.all_finite()) {
        throw NumericError(describe(id) + " bound to a non-finite value");
      }
      continue;
    }
    forward_node(id);
    if (!n.value.all_finite()) {
      throw NumericError(describe(id) + " produced a non-finite value");
    }
  }
  evaluated_ = true;
  return nodes_[root].value;
}

void Graph::forward_node(NodeId id) {
  Node& n = nodes_[id];
  n.needs_grad = false;
  for (NodeId in : n.inputs) n.needs_grad = n.needs_grad || nodes_[in].needs_grad;

  auto in = [&](std::size_t k) -> const Tensor& { return nodes_[n.inputs[k]].value; };
  auto shape_error = [&](const std::string& what) {
    return ShapeError(describe(id) + ": " + what);
  };

  switch (n.kind) {
    case OpKind::kLeaf:
      break;
    case OpKind::kConstant:
      n.value = n.attr;
      break;
    case OpKind::kAdd:
    case OpKind::kMul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      auto mode = broadcast_mode(a.shape(), b.shape());
      if (!mode) {
        throw shape_error("incompatible shapes " + shape_string(a.shape()) + " and " +
                          shape_string(b.shape()));
      }
      const bool a_big = *mode == Bcast::kSame || *mode == Bcast::kRowB ||
                         *mode == Bcast::kScalarB;
      const Tensor& big = a_big ? a : b;
      const Tensor& small = a_big ? b : a;
      Tensor out(big.shape());
      const std::size_t cols = big.cols();
      auto o = out.data();
      auto bg = big.data();
      auto sm = small.data();
      if (n.kind == OpKind::kAdd) {
        for (std::size_t e = 0; e < o.size(); ++e) o[e] = bg[e] + sm[small_index(*mode, e, cols)];
      } else {
        for (std::size_t e = 0; e < o.size(); ++e) o[e] = bg[e] * sm[small_index(*mode, e, cols)];
      }
      n.value = std::move(out);
      break;
    }
    case OpKind::kMatMul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
        throw shape_error("cannot multiply " + shape_string(a.shape()) + " by " +
                          shape_string(b.shape()));
      }
      const std::size_t m = a.shape()[0], k = a.shape()[1], cols = b.shape()[1];
      Tensor out(Shape{m, cols});
      kernels::matmul(a.data(), b.data(), out.data(), m, k, cols);
      n.value = std::move(out);
      break;
    }
    case OpKind::kAffine: {
      const Tensor& x = in(0);
      const Tensor& w = in(1);
      const Tensor& b = in(2);
      if (x.rank() < 1 || x.rank() > 2 || w.rank() != 2 || b.rank() != 1 ||
          x.cols() != w.shape()[0] || b.shape()[0] != w.shape()[1]) {
        throw shape_error("affine shapes x" + shape_string(x.shape()) + " w" +
                          shape_string(w.shape()) + " b" + shape_string(b.shape()));
      }
      const std::size_t m = x.rows(), k = x.cols(), cols = w.shape()[1];
      Tensor out(x.rank() == 1 ? Shape{cols} : Shape{m, cols});
      auto o = out.data();
      for (std::size_t i = 0; i < m; ++i) {
        std::copy(b.data().begin(), b.data().end(), o.begin() + i * cols);
      }
      kernels::matmul(x.data(), w.data(), o, m, k, cols);
      n.value = std::move(out);
      break;
    }
    case OpKind::kTranspose: {
      const Tensor& a = in(0);
      if (a.rank() != 2) throw shape_error("transpose needs rank 2");
      const std::size_t r = a.shape()[0], c = a.shape()[1];
      Tensor out(Shape{c, r});
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a[i * c + j];
      }
      n.value = std::move(out);
      break;
    }
    case OpKind::kTanh:
    case OpKind::kExp:
    case OpKind::kLog:
    case OpKind::kSquare:
    case OpKind::kNeg:
    case OpKind::kAddScalar:
    case OpKind::kMulScalar:
    case OpKind::kClamp: {
      const Tensor& a = in(0);
      Tensor out(a.shape());
      auto o = out.data();
      auto x = a.data();
      const double c0 = n.p0, c1 = n.p1;
      switch (n.kind) {
        case OpKind::kTanh: for (std::size_t e = 0; e < o.size(); ++e) o[e] = std::tanh(x[e]); break;
        case OpKind::kExp: for (std::size_t e = 0; e < o.size(); ++e) o[e] = std::exp(x[e]); break;
        case OpKind::kLog: for (std::size_t e = 0; e < o.size(); ++e) o[e] = std::log(x[e]); break;
        case OpKind::kSquare: for (std::size_t e = 0; e < o.size(); ++e) o[e] = x[e] * x[e]; break;
        case OpKind::kNeg: for (std::size_t e = 0; e < o.size(); ++e) o[e] = -x[e]; break;
        case OpKind::kAddScalar: for (std::size_t e = 0; e < o.size(); ++e) o[e] = x[e] + c0; break;
        case OpKind::kMulScalar: for (std::size_t e = 0; e < o.size(); ++e) o[e] = x[e] * c0; break;
        case OpKind::kClamp: for (std::size_t e = 0; e < o.size(); ++e) o[e] = std::clamp(x[e], c0, c1); break;
        default: break;
      }
      n.value = std::move(out);
      break;
    }
    case OpKind::kSum:
    case OpKind::kMean: {
      const Tensor& a = in(0);
      double acc = 0.0;
      for (double v : a.data()) acc += v;
      if (n.kind == OpKind::kMean) {
        if (a.numel() == 0) throw shape_error("mean of empty tensor");
        acc /= static_cast<double>(a.numel());
      }
      n.value = Tensor::scalar(acc);
      break;
    }
    case OpKind::kSumLast: {
      const Tensor& a = in(0);
      if (a.rank() < 1) throw shape_error("sum_last needs rank >= 1");
      Tensor out(drop_last(a.shape()));
      const std::size_t cols = a.cols();
      for (std::size_t r = 0; r < out.numel(); ++r) {
        double acc = 0.0;
        for (std::size_t j = 0; j < cols; ++j) acc += a[r * cols + j];
        out[r] = acc;
      }
      n.value = std::move(out);
      break;
    }
    case OpKind::kSlice: {
      const Tensor& a = in(0);
      if (a.rank() < 1 || n.i0 >= n.i1 || n.i1 > a.cols()) {
        throw shape_error("slice [" + std::to_string(n.i0) + ", " + std::to_string(n.i1) +
                          ") out of range for " + shape_string(a.shape()));
      }
      Shape s = a.shape();
      s.back() = n.i1 - n.i0;
      Tensor out(s);
      const std::size_t cols = a.cols(), w = n.i1 - n.i0, rows = a.numel() / cols;
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < w; ++j) out[r * w + j] = a[r * cols + n.i0 + j];
      }
      n.value = std::move(out);
      break;
    }
    case OpKind::kConcat: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (a.rank() < 1 || a.rank() != b.rank() || drop_last(a.shape()) != drop_last(b.shape())) {
        throw shape_error("cannot concat " + shape_string(a.shape()) + " and " +
                          shape_string(b.shape()));
      }
      Shape s = a.shape();
      const std::size_t ca = a.cols(), cb = b.cols(), rows = a.numel() / ca;
      s.back() = ca + cb;
      Tensor out(s);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < ca; ++j) out[r * (ca + cb) + j] = a[r * ca + j];
        for (std::size_t j = 0; j < cb; ++j) out[r * (ca + cb) + ca + j] = b[r * cb + j];
      }
      n.value = std::move(out);
      break;
    }
    case OpKind::kLogSumExp: {
      const Tensor& a = in(0);
      if (a.rank() < 1 || n.attr.shape() != a.shape()) {
        throw shape_error("logsumexp mask shape " + shape_string(n.attr.shape()) +
                          " does not match input " + shape_string(a.shape()));
      }
      Tensor out(drop_last(a.shape()));
      const std::size_t cols = a.cols();
      for (std::size_t r = 0; r < out.numel(); ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < cols; ++j) {
          if (n.attr[r * cols + j] != 0.0) mx = std::max(mx, a[r * cols + j]);
        }
        if (!std::isfinite(mx)) throw shape_error("logsumexp row " + std::to_string(r) + " fully masked");
        double acc = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
          if (n.attr[r * cols + j] != 0.0) acc += std::exp(a[r * cols + j] - mx);
        }
        out[r] = mx + std::log(acc);
      }
      n.value = std::move(out);
      break;
    }
  }
}

Gradients Graph::gradients(NodeId root) const {
  if (!evaluated_) throw StateError("gradients() called before evaluate()");
  if (root >= nodes_.size()) throw InvalidArgument("root node does not exist");
  if (nodes_[root].value.numel() != 1) {
    throw ShapeError(describe(root) + " is not scalar; gradients need a scalar root");
  }
  std::vector<Tensor> grads(nodes_.size());
  std::vector<bool> live(nodes_.size(), false);
  grads[root] = Tensor::filled(nodes_[root].value.shape(), 1.0);
  live[root] = true;

  for (NodeId id = root + 1; id-- > 0;) {
    if (!live[id] || !nodes_[id].needs_grad) continue;
    if (!grads[id].all_finite()) {
      throw NumericError("non-finite gradient at " + describe(id));
    }
    backward_node(id, grads, live);
  }

  Gradients out;
  for (NodeId id = 0; id <= root; ++id) {
    const Node& n = nodes_[id];
    if (n.kind != OpKind::kLeaf || !n.needs_grad) continue;
    out.emplace(id, live[id] ? grads[id] : Tensor::zeros_like(n.value));
  }
  return out;
}

void Graph::backward_node(NodeId id, std::vector<Tensor>& grads,
                          std::vector<bool>& live) const {
  const Node& n = nodes_[id];
  const Tensor& g = grads[id];
  auto in_node = [&](std::size_t k) -> const Node& { return nodes_[n.inputs[k]]; };
  // Zero-initialised accumulator for input k, or nullptr if it needs no grad.
  auto acc = [&](std::size_t k) -> Tensor* {
    const NodeId src = n.inputs[k];
    if (!nodes_[src].needs_grad) return nullptr;
    if (!live[src]) {
      grads[src] = Tensor::zeros_like(nodes_[src].value);
      live[src] = true;
    }
    return &grads[src];
  };

  switch (n.kind) {
    case OpKind::kLeaf:
    case OpKind::kConstant:
      break;
    case OpKind::kAdd: {
      if (Tensor* ga = acc(0)) reduce_into(*ga, g);
      if (Tensor* gb = acc(1)) reduce_into(*gb, g);
      break;
    }
    case OpKind::kMul: {
      const Tensor& a = in_node(0).value;
      const Tensor& b = in_node(1).value;
      const Bcast mode = *broadcast_mode(a.shape(), b.shape());
      const std::size_t cols = g.cols();
      const bool a_big = mode == Bcast::kSame || mode == Bcast::kRowB || mode == Bcast::kScalarB;
      auto gd = g.data();
      // d/da = g * b, d/db = g * a, each reduced to the operand's shape.
      for (std::size_t k = 0; k < 2; ++k) {
        Tensor* dst = acc(k);
        if (!dst) continue;
        const Tensor& other = k == 0 ? b : a;
        const bool other_small = (k == 0) == a_big;
        Tensor full(g.shape());
        auto f = full.data();
        auto od = other.data();
        if (other_small) {
          for (std::size_t e = 0; e < f.size(); ++e) f[e] = gd[e] * od[small_index(mode, e, cols)];
        } else {
          for (std::size_t e = 0; e < f.size(); ++e) f[e] = gd[e] * od[e];
        }
        reduce_into(*dst, full);
      }
      break;
    }
    case OpKind::kMatMul: {
      const Tensor& a = in_node(0).value;
      const Tensor& b = in_node(1).value;
      const std::size_t m = a.shape()[0], k = a.shape()[1], cols = b.shape()[1];
      if (Tensor* ga = acc(0)) kernels::matmul_nt(g.data(), b.data(), ga->data(), m, cols, k);
      if (Tensor* gb = acc(1)) kernels::matmul_tn(a.data(), g.data(), gb->data(), m, k, cols);
      break;
    }
    case OpKind::kAffine: {
      const Tensor& x = in_node(0).value;
      const Tensor& w = in_node(1).value;
      const std::size_t m = x.rows(), k = x.cols(), cols = w.shape()[1];
      if (Tensor* gx = acc(0)) kernels::matmul_nt(g.data(), w.data(), gx->data(), m, cols, k);
      if (Tensor* gw = acc(1)) kernels::matmul_tn(x.data(), g.data(), gw->data(), m, k, cols);
      if (Tensor* gb = acc(2)) {
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < cols; ++j) (*gb)[j] += g[i * cols + j];
        }
      }
      break;
    }
    case OpKind::kTranspose: {
      if (Tensor* ga = acc(0)) {
        const std::size_t r = ga->shape()[0], c = ga->shape()[1];
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < c; ++j) (*ga)[i * c + j] += g[j * r + i];
        }
      }
      break;
    }
    case OpKind::kTanh:
    case OpKind::kExp:
    case OpKind::kLog:
    case OpKind::kSquare:
    case OpKind::kNeg:
    case OpKind::kAddScalar:
    case OpKind::kMulScalar:
    case OpKind::kClamp: {
      Tensor* ga = acc(0);
      if (!ga) break;
      auto d = ga->data();
      auto gd = g.data();
      auto x = in_node(0).value.data();
      auto y = n.value.data();
      switch (n.kind) {
        case OpKind::kTanh: for (std::size_t e = 0; e < d.size(); ++e) d[e] += gd[e] * (1.0 - y[e] * y[e]); break;
        case OpKind::kExp: for (std::size_t e = 0; e < d.size(); ++e) d[e] += gd[e] * y[e]; break;
        case OpKind::kLog: for (std::size_t e = 0; e < d.size(); ++e) d[e] += gd[e] / x[e]; break;
        case OpKind::kSquare: for (std::size_t e = 0; e < d.size(); ++e) d[e] += 2.0 * x[e] * gd[e]; break;
        case OpKind::kNeg: for (std::size_t e = 0; e < d.size(); ++e) d[e] -= gd[e]; break;
        case OpKind::kAddScalar: for (std::size_t e = 0; e < d.size(); ++e) d[e] += gd[e]; break;
        case OpKind::kMulScalar: for (std::size_t e = 0; e < d.size(); ++e) d[e] += gd[e] * n.p0; break;
        case OpKind::kClamp:
          for (std::size_t e = 0; e < d.size(); ++e) {
            if (x[e] >= n.p0 && x[e] <= n.p1) d[e] += gd[e];
          }
          break;
        default: break;
      }
      break;
    }
    case OpKind::kSum:
    case OpKind::kMean: {
      Tensor* ga = acc(0);
      if (!ga) break;
      double s = g[0];
      if (n.kind == OpKind::kMean) s /= static_cast<double>(ga->numel());
      for (double& v : ga->data()) v += s;
      break;
    }
    case OpKind::kSumLast: {
      Tensor* ga = acc(0);
      if (!ga) break;
      const std::size_t cols = ga->cols();
      for (std::size_t r = 0; r < g.numel(); ++r) {
        for (std::size_t j = 0; j < cols; ++j) (*ga)[r * cols + j] += g[r];
      }
      break;
    }
    case OpKind::kSlice: {
      Tensor* ga = acc(0);
      if (!ga) break;
      const std::size_t cols = ga->cols(), w = n.i1 - n.i0, rows = ga->numel() / cols;
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < w; ++j) (*ga)[r * cols + n.i0 + j] += g[r * w + j];
      }
      break;
    }
    case OpKind::kConcat: {
      const std::size_t ca = in_node(0).value.cols(), cb = in_node(1).value.cols();
      const std::size_t rows = in_node(0).value.numel() / ca;
      if (Tensor* ga = acc(0)) {
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < ca; ++j) (*ga)[r * ca + j] += g[r * (ca + cb) + j];
        }
      }
      if (Tensor* gb = acc(1)) {
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < cb; ++j) (*gb)[r * cb + j] += g[r * (ca + cb) + ca + j];
        }
      }
      break;
    }
    case OpKind::kLogSumExp: {
      Tensor* ga = acc(0);
      if (!ga) break;
      const Tensor& a = in_node(0).value;
      const std::size_t cols = a.cols();
      for (std::size_t r = 0; r < g.numel(); ++r) {
        for (std::size_t j = 0; j < cols; ++j) {
          const std::size_t e = r * cols + j;
          if (n.attr[e] != 0.0) (*ga)[e] += g[r] * std::exp(a[e] - n.value[r]);
        }
      }
      break;
    }
  }
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double h) {
  if (!(h > 0.0)) throw InvalidArgument("finite_diff_grad needs h > 0");
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t k = 0; k < x.numel(); ++k) {
    const double orig = probe[k];
    probe[k] = orig + h;
    const double fp = f(probe);
    probe[k] = orig - h;
    const double fm = f(probe);
    probe[k] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("finite_diff_grad: non-finite function value at coordinate " +
                         std::to_string(k));
    }
    grad[k] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

}  // namespace flowcon::nd
