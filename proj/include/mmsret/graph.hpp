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

#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mmsret/tensor.hpp"

namespace mmsret {

/// Raised for shape mismatches, unbound inputs, non-finite intermediates and
/// misuse such as calling backward() before forward().
class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using NodeId = std::size_t;
using NamedTensors = std::map<std::string, Tensor>;

enum class OpKind {
  kInput,
  kConstant,
  kMatMul,
  kAdd,
  kSub,
  kMul,
  kScale,
  kAddScalar,
  kAddRow,
  kTanh,
  kRelu,
  kMap,
  kSum,
  kMean,
  kDiag,
  kGather,
  kMaskedLogSumExp,
  kTranspose,
};

const char* op_name(OpKind kind);

enum class Axis { kRows, kCols };

/// Reverse-mode differentiable expression graph.
///
/// Nodes are appended in construction order, which is also a topological
/// order: every operation only refers to nodes created before it. Input
/// placeholders get their values (and therefore shapes) at forward() time, so
/// one graph can be evaluated repeatedly with different bindings.
///
/// A graph is not thread-safe; it may be moved between threads.
class Graph {
 public:
  /// Element function and its derivative, for kMap nodes.
  struct ElementFn {
    std::function<double(double)> f;
    std::function<double(double)> df;
    std::string label;
  };

  NodeId input(std::string name, bool trainable = true);
  NodeId constant(Tensor value);

  // c = op(a) * op(b), where op transposes when requested. Both rank 2.
  NodeId matmul(NodeId a, NodeId b, bool transpose_a = false,
                bool transpose_b = false);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double factor);
  NodeId add_scalar(NodeId a, double offset);
  // Adds a length-C vector to every row of an R x C matrix.
  NodeId add_row(NodeId matrix, NodeId row);
  NodeId tanh(NodeId a);
  NodeId relu(NodeId a);
  NodeId map(NodeId a, ElementFn fn);
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);
  // Main diagonal of a square matrix as a vector.
  NodeId diag(NodeId a);
  // Vector of a(r, c) for the listed cells.
  NodeId gather(NodeId a,
                std::vector<std::pair<std::size_t, std::size_t>> cells);
  // Stabilized log-sum-exp of each row (kRows) or column (kCols) of `a`,
  // restricted to cells where `include` is nonzero. Every row/column must
  // include at least one cell.
  NodeId masked_logsumexp(NodeId a, Tensor include, Axis axis);
  NodeId transpose(NodeId a);

  void set_output(NodeId id);
  NodeId output() const;

  std::size_t size() const { return nodes_.size(); }
  OpKind kind(NodeId id) const { return nodes_.at(id).kind; }
  std::string describe(NodeId id) const;

  /// Evaluates every node. All inputs must be bound and no unknown names may
  /// be passed. Returns the output node's value.
  const Tensor& forward(const NamedTensors& inputs);

  /// Propagates `seed` (shaped like the output) back through the graph.
  /// Returns one gradient per trainable input; inputs with no path to the
  /// output receive zero tensors.
  NamedTensors backward(const Tensor& seed);

  const Tensor& value(NodeId id) const;
  const Tensor& gradient(NodeId id) const;
  bool has_forward() const { return evaluated_; }

  std::vector<std::string> input_names(bool trainable_only = false) const;

 private:
  struct Node {
    OpKind kind;
    std::vector<NodeId> args;
    std::string name;
    bool trainable = false;
    double scalar = 0.0;
    bool flag_a = false;
    bool flag_b = false;
    Axis axis = Axis::kRows;
    Tensor aux;
    std::vector<std::pair<std::size_t, std::size_t>> cells;
    ElementFn fn;
    Tensor value;
    Tensor grad;
  };

  static Node make_node(OpKind kind, std::vector<NodeId> args);
  NodeId push(Node node);
  void check_arg(NodeId id) const;
  void evaluate(NodeId id, const NamedTensors& inputs);
  void propagate(NodeId id);
  [[noreturn]] void fail(NodeId id, const std::string& what) const;

  std::vector<Node> nodes_;
  std::map<std::string, NodeId> inputs_;
  NodeId output_ = 0;
  bool has_output_ = false;
  bool evaluated_ = false;
};

}  // namespace mmsret
