#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "seven/tensor.hpp"

namespace seven {

class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const noexcept { return id_; }
  Graph* graph() const noexcept { return graph_; }
  bool valid() const noexcept { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

// Reverse-mode tape. Nodes are appended in evaluation order, so reverse
// insertion order is a reverse topological order and every node is visited
// once. Gradient contributions are summed in that fixed order.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  Var parameter(Tensor value);

  // Runs reverse accumulation from a scalar (single element) loss. Repeated
  // calls reset all gradients first.
  void backward(Var loss);

  // Gradient of a node after backward(); zeros when the node did not reach
  // the loss.
  Tensor grad(Var v) const;
  bool has_grad(Var v) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  std::string_view op_name(Var v) const { return nodes_.at(v.id()).op; }

  // Used by op implementations.
  Var record(std::string op, Tensor value, std::vector<std::size_t> inputs,
             BackwardFn backward);
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& upstream(std::size_t id) const { return nodes_[id].grad; }
  const std::vector<std::size_t>& inputs(std::size_t id) const {
    return nodes_[id].inputs;
  }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Accumulation buffer for an input; allocated as zeros on first use.
  Tensor& grad_buffer(std::size_t id);

 private:
  struct Node {
    std::string op;
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
};

namespace ops {

// [m x k] * [k x n]
Var matmul(Var a, Var b);
// Same shape, or a [m x n] plus a bias of shape [n] / [1 x n] added to every row.
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var sum(Var a);
Var softmax_rows(Var a);
// Exact (erf based) GELU.
Var gelu(Var a);
// Row-wise normalisation with affine gain and bias of shape [cols].
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
// Mean negative log-likelihood of integer labels under row-wise softmax.
Var cross_entropy(Var logits, std::span<const int> labels);
Var reshape(Var a, Shape shape);
Var transpose(Var a);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
// out[i] = table[indices[i]]
Var gather_rows(Var table, std::span<const std::size_t> indices);

}  // namespace ops

}  // namespace seven
