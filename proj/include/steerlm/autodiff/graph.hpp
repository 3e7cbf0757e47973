#pragma once

#include <functional>
#include <vector>

#include "steerlm/autodiff/tensor.hpp"

namespace steerlm::ad {

class Graph;

/// Handle to a node of a Graph. Cheap to copy; only valid while the graph lives.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  bool valid() const { return graph != nullptr && id >= 0; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Dynamic tape. Nodes are appended in evaluation order, so creation order is a
/// topological order and backward simply walks it in reverse.
///
/// A graph supports exactly one backward pass. After it, intermediate values and
/// gradients are released; leaf gradients stay readable until clear().
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, int self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value) { return add_leaf(std::move(value), nullptr, false); }
  Var leaf(Tensor value, bool requires_grad = true) {
    return add_leaf(std::move(value), nullptr, requires_grad);
  }
  /// Leaf whose value lives outside the graph (model parameters). The caller
  /// keeps `value` alive and unmodified for the graph's lifetime.
  Var borrow(const Tensor& value, bool requires_grad = false) {
    return add_leaf(Tensor(), &value, requires_grad);
  }

  const Tensor& value(Var v) const { return value(v.id); }
  const Tensor& value(int id) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  bool has_grad(Var v) const { return !nodes_.at(v.id).grad.empty(); }
  /// Gradient of the last backward() loss with respect to `v`.
  const Tensor& grad(Var v) const;

  void backward(Var loss);

  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }
  void clear();

  // Op authoring interface. `fn` runs only when the output needs a gradient.
  Var record(Tensor value, std::vector<int> inputs, BackwardFn fn);
  bool needs_grad(int id) const { return nodes_[id].requires_grad; }
  const Tensor& grad_of(int id) const { return nodes_[id].grad; }
  /// Gradient accumulator for node `id`, zero-allocated on first use.
  Tensor& grad_buffer(int id);

 private:
  struct Node {
    Tensor owned;
    const Tensor* borrowed = nullptr;
    Tensor grad;
    std::vector<int> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    bool is_leaf = true;
    bool freed = false;
  };

  Var add_leaf(Tensor value, const Tensor* borrowed, bool requires_grad);
  void check_open() const;

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

inline const Tensor& Var::value() const { return graph->value(id); }

}  // namespace steerlm::ad
