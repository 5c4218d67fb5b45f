// Copyright 2026 The mmsret Authors
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

#include "mmsret/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace mmsret {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kInput: return "input";
    case OpKind::kConstant: return "constant";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kAddScalar: return "add_scalar";
    case OpKind::kAddRow: return "add_row";
    case OpKind::kTanh: return "tanh";
    case OpKind::kRelu: return "relu";
    case OpKind::kMap: return "map";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kDiag: return "diag";
    case OpKind::kGather: return "gather";
    case OpKind::kMaskedLogSumExp: return "masked_logsumexp";
    case OpKind::kTranspose: return "transpose";
  }
  return "unknown";
}

namespace {

// Element (r, c) of op(m) where op optionally transposes.
inline double at(const Tensor& m, bool transposed, std::size_t r,
                 std::size_t c) {
  return transposed ? m(c, r) : m(r, c);
}

inline std::size_t op_rows(const Tensor& m, bool transposed) {
  return transposed ? m.shape()[1] : m.shape()[0];
}

inline std::size_t op_cols(const Tensor& m, bool transposed) {
  return transposed ? m.shape()[0] : m.shape()[1];
}

}  // namespace

Graph::Node Graph::make_node(OpKind kind, std::vector<NodeId> args) {
  Node n;
  n.kind = kind;
  n.args = std::move(args);
  return n;
}

NodeId Graph::push(Node node) {
  for (NodeId a : node.args) check_arg(a);
  nodes_.push_back(std::move(node));
  evaluated_ = false;
  return nodes_.size() - 1;
}

void Graph::check_arg(NodeId id) const {
  if (id >= nodes_.size()) {
    throw GraphError("operation refers to node " + std::to_string(id) +
                     " which does not exist yet");
  }
}

std::string Graph::describe(NodeId id) const {
  std::ostringstream os;
  os << "node " << id << " (" << op_name(nodes_.at(id).kind);
  if (!nodes_[id].name.empty()) os << " '" << nodes_[id].name << "'";
  if (nodes_[id].kind == OpKind::kMap && !nodes_[id].fn.label.empty()) {
    os << " " << nodes_[id].fn.label;
  }
  os << ")";
  return os.str();
}

void Graph::fail(NodeId id, const std::string& what) const {
  throw GraphError(describe(id) + ": " + what);
}

NodeId Graph::input(std::string name, bool trainable) {
  if (name.empty()) throw GraphError("input name must not be empty");
  if (inputs_.contains(name)) {
    throw GraphError("input '" + name + "' declared twice");
  }
  Node n = make_node(OpKind::kInput, {});
  n.name = name;
  n.trainable = trainable;
  const NodeId id = push(std::move(n));
  inputs_.emplace(std::move(name), id);
  return id;
}

NodeId Graph::constant(Tensor value) {
  Node n = make_node(OpKind::kConstant, {});
  n.aux = std::move(value);
  return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b, bool transpose_a, bool transpose_b) {
  Node n = make_node(OpKind::kMatMul, {a, b});
  n.flag_a = transpose_a;
  n.flag_b = transpose_b;
  return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
  return push(make_node(OpKind::kAdd, {a, b}));
}

NodeId Graph::sub(NodeId a, NodeId b) {
  return push(make_node(OpKind::kSub, {a, b}));
}

NodeId Graph::mul(NodeId a, NodeId b) {
  return push(make_node(OpKind::kMul, {a, b}));
}

NodeId Graph::scale(NodeId a, double factor) {
  Node n = make_node(OpKind::kScale, {a});
  n.scalar = factor;
  return push(std::move(n));
}

NodeId Graph::add_scalar(NodeId a, double offset) {
  Node n = make_node(OpKind::kAddScalar, {a});
  n.scalar = offset;
  return push(std::move(n));
}

NodeId Graph::add_row(NodeId matrix, NodeId row) {
  return push(make_node(OpKind::kAddRow, {matrix, row}));
}

NodeId Graph::tanh(NodeId a) {
  return push(make_node(OpKind::kTanh, {a}));
}

NodeId Graph::relu(NodeId a) {
  return push(make_node(OpKind::kRelu, {a}));
}

NodeId Graph::map(NodeId a, ElementFn fn) {
  if (!fn.f || !fn.df) throw GraphError("map needs a function and derivative");
  Node n = make_node(OpKind::kMap, {a});
  n.fn = std::move(fn);
  return push(std::move(n));
}

NodeId Graph::sum(NodeId a) {
  return push(make_node(OpKind::kSum, {a}));
}

NodeId Graph::mean(NodeId a) {
  return push(make_node(OpKind::kMean, {a}));
}

NodeId Graph::diag(NodeId a) {
  return push(make_node(OpKind::kDiag, {a}));
}

NodeId Graph::gather(NodeId a,
                     std::vector<std::pair<std::size_t, std::size_t>> cells) {
  Node n = make_node(OpKind::kGather, {a});
  n.cells = std::move(cells);
  return push(std::move(n));
}

NodeId Graph::masked_logsumexp(NodeId a, Tensor include, Axis axis) {
  Node n = make_node(OpKind::kMaskedLogSumExp, {a});
  n.aux = std::move(include);
  n.axis = axis;
  return push(std::move(n));
}

NodeId Graph::transpose(NodeId a) {
  return push(make_node(OpKind::kTranspose, {a}));
}

void Graph::set_output(NodeId id) {
  check_arg(id);
  output_ = id;
  has_output_ = true;
}

NodeId Graph::output() const {
  if (has_output_) return output_;
  if (nodes_.empty()) throw GraphError("graph is empty");
  return nodes_.size() - 1;
}

const Tensor& Graph::value(NodeId id) const {
  if (!evaluated_) throw GraphError("value() requested before forward()");
  return nodes_.at(id).value;
}

const Tensor& Graph::gradient(NodeId id) const { return nodes_.at(id).grad; }

std::vector<std::string> Graph::input_names(bool trainable_only) const {
  std::vector<std::string> names;
  for (const auto& [name, id] : inputs_) {
    if (!trainable_only || nodes_[id].trainable) names.push_back(name);
  }
  return names;
}

const Tensor& Graph::forward(const NamedTensors& inputs) {
  for (const auto& [name, t] : inputs) {
    if (!inputs_.contains(name)) {
      throw GraphError("binding for unknown input '" + name + "'");
    }
  }
  evaluated_ = false;
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    evaluate(id, inputs);
    if (!nodes_[id].value.all_finite()) fail(id, "non-finite value");
  }
  evaluated_ = true;
  return nodes_[output()].value;
}

void Graph::evaluate(NodeId id, const NamedTensors& inputs) {
  Node& n = nodes_[id];
  auto arg = [&](std::size_t k) -> const Tensor& {
    return nodes_[n.args[k]].value;
  };
  auto need_rank = [&](std::size_t k, std::size_t rank) {
    if (arg(k).rank() != rank) {
      fail(id, "argument " + std::to_string(k) + " has shape " +
                   arg(k).shape_string() + ", expected rank " +
                   std::to_string(rank));
    }
  };
  auto need_same = [&]() {
    if (!arg(0).same_shape(arg(1))) {
      fail(id, "shape mismatch " + arg(0).shape_string() + " vs " +
                   arg(1).shape_string());
    }
  };

  switch (n.kind) {
    case OpKind::kInput: {
      auto it = inputs.find(n.name);
      if (it == inputs.end()) fail(id, "input not bound");
      n.value = it->second;
      break;
    }
    case OpKind::kConstant:
      n.value = n.aux;
      break;
    case OpKind::kMatMul: {
      need_rank(0, 2);
      need_rank(1, 2);
      const Tensor& a = arg(0);
      const Tensor& b = arg(1);
      const std::size_t m = op_rows(a, n.flag_a);
      const std::size_t k = op_cols(a, n.flag_a);
      const std::size_t p = op_cols(b, n.flag_b);
      if (op_rows(b, n.flag_b) != k) {
        fail(id, "inner dimensions differ: " + a.shape_string() +
                     (n.flag_a ? "^T" : "") + " * " + b.shape_string() +
                     (n.flag_b ? "^T" : ""));
      }
      Tensor c = Tensor::matrix(m, p, 0.0);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < p; ++j) {
          double acc = 0.0;
          for (std::size_t t = 0; t < k; ++t) {
            acc += at(a, n.flag_a, i, t) * at(b, n.flag_b, t, j);
          }
          c(i, j) = acc;
        }
      }
      n.value = std::move(c);
      break;
    }
    case OpKind::kAdd:
    case OpKind::kSub:
    case OpKind::kMul: {
      need_same();
      Tensor c = arg(0);
      const Tensor& b = arg(1);
      for (std::size_t i = 0; i < c.size(); ++i) {
        if (n.kind == OpKind::kAdd) c[i] += b[i];
        else if (n.kind == OpKind::kSub) c[i] -= b[i];
        else c[i] *= b[i];
      }
      n.value = std::move(c);
      break;
    }
    case OpKind::kScale:
    case OpKind::kAddScalar: {
      Tensor c = arg(0);
      for (double& v : c.values()) {
        v = n.kind == OpKind::kScale ? v * n.scalar : v + n.scalar;
      }
      n.value = std::move(c);
      break;
    }
    case OpKind::kAddRow: {
      need_rank(0, 2);
      need_rank(1, 1);
      const Tensor& row = arg(1);
      if (row.size() != arg(0).shape()[1]) {
        fail(id, "row of length " + std::to_string(row.size()) +
                     " added to matrix " + arg(0).shape_string());
      }
      Tensor c = arg(0);
      for (std::size_t r = 0; r < c.shape()[0]; ++r) {
        for (std::size_t j = 0; j < row.size(); ++j) c(r, j) += row[j];
      }
      n.value = std::move(c);
      break;
    }
    case OpKind::kTanh:
    case OpKind::kRelu:
    case OpKind::kMap: {
      Tensor c = arg(0);
      for (double& v : c.values()) {
        if (n.kind == OpKind::kTanh) v = std::tanh(v);
        else if (n.kind == OpKind::kRelu) v = v > 0.0 ? v : 0.0;
        else v = n.fn.f(v);
      }
      n.value = std::move(c);
      break;
    }
    case OpKind::kSum:
    case OpKind::kMean: {
      const Tensor& a = arg(0);
      if (a.empty()) fail(id, "reduction over an empty tensor");
      double acc = 0.0;
      for (double v : a.values()) acc += v;
      if (n.kind == OpKind::kMean) acc /= static_cast<double>(a.size());
      n.value = Tensor::scalar(acc);
      break;
    }
    case OpKind::kDiag: {
      need_rank(0, 2);
      const Tensor& a = arg(0);
      if (a.shape()[0] != a.shape()[1]) {
        fail(id, "diag of non-square matrix " + a.shape_string());
      }
      Tensor c({a.shape()[0]}, 0.0);
      for (std::size_t i = 0; i < c.size(); ++i) c[i] = a(i, i);
      n.value = std::move(c);
      break;
    }
    case OpKind::kGather: {
      need_rank(0, 2);
      const Tensor& a = arg(0);
      Tensor c({n.cells.size()}, 0.0);
      for (std::size_t i = 0; i < n.cells.size(); ++i) {
        const auto [r, col] = n.cells[i];
        if (r >= a.shape()[0] || col >= a.shape()[1]) {
          fail(id, "cell (" + std::to_string(r) + ", " + std::to_string(col) +
                       ") outside " + a.shape_string());
        }
        c[i] = a(r, col);
      }
      n.value = std::move(c);
      break;
    }
    case OpKind::kMaskedLogSumExp: {
      need_rank(0, 2);
      const Tensor& a = arg(0);
      if (!a.same_shape(n.aux)) {
        fail(id, "mask shape " + n.aux.shape_string() + " vs input " +
                     a.shape_string());
      }
      const bool rows = n.axis == Axis::kRows;
      const std::size_t outer = rows ? a.shape()[0] : a.shape()[1];
      const std::size_t inner = rows ? a.shape()[1] : a.shape()[0];
      Tensor c({outer}, 0.0);
      for (std::size_t o = 0; o < outer; ++o) {
        double peak = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < inner; ++i) {
          const std::size_t r = rows ? o : i;
          const std::size_t col = rows ? i : o;
          if (n.aux(r, col) != 0.0) peak = std::max(peak, a(r, col));
        }
        if (!std::isfinite(peak)) {
          fail(id, std::string(rows ? "row " : "column ") + std::to_string(o) +
                       " has no included cells");
        }
        double acc = 0.0;
        for (std::size_t i = 0; i < inner; ++i) {
          const std::size_t r = rows ? o : i;
          const std::size_t col = rows ? i : o;
          if (n.aux(r, col) != 0.0) acc += std::exp(a(r, col) - peak);
        }
        c[o] = peak + std::log(acc);
      }
      n.value = std::move(c);
      break;
    }
    case OpKind::kTranspose: {
      need_rank(0, 2);
      const Tensor& a = arg(0);
      Tensor c = Tensor::matrix(a.shape()[1], a.shape()[0], 0.0);
      for (std::size_t r = 0; r < a.shape()[0]; ++r) {
        for (std::size_t col = 0; col < a.shape()[1]; ++col) {
          c(col, r) = a(r, col);
        }
      }
      n.value = std::move(c);
      break;
    }
  }
}

NamedTensors Graph::backward(const Tensor& seed) {
  if (!evaluated_) throw GraphError("backward() called before forward()");
  const NodeId out = output();
  if (!seed.same_shape(nodes_[out].value)) {
    throw GraphError("seed shape " + seed.shape_string() +
                     " does not match output " +
                     nodes_[out].value.shape_string());
  }
  for (Node& n : nodes_) n.grad = Tensor(n.value.shape(), 0.0);
  nodes_[out].grad = seed;
  for (NodeId id = out + 1; id-- > 0;) propagate(id);

  NamedTensors grads;
  for (const auto& [name, id] : inputs_) {
    if (nodes_[id].trainable) grads.emplace(name, nodes_[id].grad);
  }
  return grads;
}

void Graph::propagate(NodeId id) {
  Node& n = nodes_[id];
  const Tensor& g = n.grad;
  auto grad_of = [&](std::size_t k) -> Tensor& { return nodes_[n.args[k]].grad; };
  auto arg = [&](std::size_t k) -> const Tensor& {
    return nodes_[n.args[k]].value;
  };

  switch (n.kind) {
    case OpKind::kInput:
    case OpKind::kConstant:
      break;
    case OpKind::kMatMul: {
      const Tensor& a = arg(0);
      const Tensor& b = arg(1);
      const std::size_t m = op_rows(a, n.flag_a);
      const std::size_t k = op_cols(a, n.flag_a);
      const std::size_t p = op_cols(b, n.flag_b);
      // d op(A) = G op(B)^T, d op(B) = op(A)^T G
      Tensor& ga = grad_of(0);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t t = 0; t < k; ++t) {
          double acc = 0.0;
          for (std::size_t j = 0; j < p; ++j) {
            acc += g(i, j) * at(b, n.flag_b, t, j);
          }
          if (n.flag_a) ga(t, i) += acc;
          else ga(i, t) += acc;
        }
      }
      Tensor& gb = grad_of(1);
      for (std::size_t t = 0; t < k; ++t) {
        for (std::size_t j = 0; j < p; ++j) {
          double acc = 0.0;
          for (std::size_t i = 0; i < m; ++i) {
            acc += at(a, n.flag_a, i, t) * g(i, j);
          }
          if (n.flag_b) gb(j, t) += acc;
          else gb(t, j) += acc;
        }
      }
      break;
    }
    case OpKind::kAdd:
    case OpKind::kSub: {
      const double sign = n.kind == OpKind::kAdd ? 1.0 : -1.0;
      Tensor& ga = grad_of(0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      Tensor& gb = grad_of(1);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += sign * g[i];
      break;
    }
    case OpKind::kMul: {
      // Copies guard against a == b aliasing.
      const Tensor a = arg(0);
      const Tensor b = arg(1);
      Tensor& ga = grad_of(0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
      Tensor& gb = grad_of(1);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
      break;
    }
    case OpKind::kScale: {
      Tensor& ga = grad_of(0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += n.scalar * g[i];
      break;
    }
    case OpKind::kAddScalar: {
      Tensor& ga = grad_of(0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      break;
    }
    case OpKind::kAddRow: {
      Tensor& ga = grad_of(0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      Tensor& gr = grad_of(1);
      const std::size_t cols = gr.size();
      for (std::size_t r = 0; r < g.shape()[0]; ++r) {
        for (std::size_t j = 0; j < cols; ++j) gr[j] += g(r, j);
      }
      break;
    }
    case OpKind::kTanh: {
      Tensor& ga = grad_of(0);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double y = n.value[i];
        ga[i] += g[i] * (1.0 - y * y);
      }
      break;
    }
    case OpKind::kRelu: {
      const Tensor& a = arg(0);
      Tensor& ga = grad_of(0);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (a[i] > 0.0) ga[i] += g[i];
      }
      break;
    }
    case OpKind::kMap: {
      const Tensor& a = arg(0);
      Tensor& ga = grad_of(0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.fn.df(a[i]);
      break;
    }
    case OpKind::kSum:
    case OpKind::kMean: {
      Tensor& ga = grad_of(0);
      double gv = g.item();
      if (n.kind == OpKind::kMean) gv /= static_cast<double>(ga.size());
      for (double& v : ga.values()) v += gv;
      break;
    }
    case OpKind::kDiag: {
      Tensor& ga = grad_of(0);
      for (std::size_t i = 0; i < g.size(); ++i) ga(i, i) += g[i];
      break;
    }
    case OpKind::kGather: {
      Tensor& ga = grad_of(0);
      for (std::size_t i = 0; i < n.cells.size(); ++i) {
        ga(n.cells[i].first, n.cells[i].second) += g[i];
      }
      break;
    }
    case OpKind::kMaskedLogSumExp: {
      const Tensor& a = arg(0);
      Tensor& ga = grad_of(0);
      const bool rows = n.axis == Axis::kRows;
      const std::size_t inner = rows ? a.shape()[1] : a.shape()[0];
      for (std::size_t o = 0; o < n.value.size(); ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
          const std::size_t r = rows ? o : i;
          const std::size_t col = rows ? i : o;
          if (n.aux(r, col) != 0.0) {
            ga(r, col) += g[o] * std::exp(a(r, col) - n.value[o]);
          }
        }
      }
      break;
    }
    case OpKind::kTranspose: {
      Tensor& ga = grad_of(0);
      for (std::size_t r = 0; r < ga.shape()[0]; ++r) {
        for (std::size_t c = 0; c < ga.shape()[1]; ++c) ga(r, c) += g(c, r);
      }
      break;
    }
  }
}

}  // namespace mmsret
