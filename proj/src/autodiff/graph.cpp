#include "steerlm/autodiff/graph.hpp"

#include <stdexcept>

namespace steerlm::ad {

Var Graph::add_leaf(Tensor value, const Tensor* borrowed, bool requires_grad) {
  check_open();
  Node node;
  node.owned = std::move(value);
  node.borrowed = borrowed;
  node.requires_grad = requires_grad;
  node.is_leaf = true;
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

const Tensor& Graph::value(int id) const {
  const Node& n = nodes_.at(id);
  if (n.freed) throw std::logic_error("value of an intermediate node was released by backward()");
  return n.borrowed ? *n.borrowed : n.owned;
}

const Tensor& Graph::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  if (!n.requires_grad) throw std::logic_error("gradient requested for a node without requires_grad");
  if (n.grad.empty()) throw std::logic_error("no gradient available; call backward() first");
  return n.grad;
}

Var Graph::record(Tensor value, std::vector<int> inputs, BackwardFn fn) {
  check_open();
  bool wants_grad = false;
  for (int id : inputs) wants_grad = wants_grad || nodes_.at(id).requires_grad;
#ifndef NDEBUG
  if (!value.all_finite()) {
    bool inputs_finite = true;
    for (int id : inputs) inputs_finite = inputs_finite && this->value(id).all_finite();
    if (inputs_finite) throw std::runtime_error("op produced non-finite values from finite inputs");
  }
#endif
  Node node;
  node.owned = std::move(value);
  node.is_leaf = false;
  node.requires_grad = wants_grad;
  if (wants_grad) {
    node.inputs = std::move(inputs);
    node.backward = std::move(fn);
  }
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Tensor& Graph::grad_buffer(int id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(value(id).shape());
  return n.grad;
}

void Graph::backward(Var loss) {
  if (loss.graph != this) throw std::invalid_argument("loss belongs to a different graph");
  if (consumed_) throw std::logic_error("backward already ran on this graph; rebuild the forward pass");
  const Tensor& lv = value(loss.id);
  if (lv.size() != 1) throw ShapeError("backward needs a scalar loss, got shape " + shape_str(lv.shape()));
  consumed_ = true;
  if (!nodes_[loss.id].requires_grad) return;
  grad_buffer(loss.id).fill(Scalar(1));
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.is_leaf || !n.requires_grad || n.grad.empty()) continue;
    n.backward(*this, id);
  }
  // The loss value itself stays readable.
  for (int id = 0; id < static_cast<int>(nodes_.size()); ++id) {
    Node& n = nodes_[id];
    if (n.is_leaf) continue;
    n.backward = nullptr;
    n.grad = Tensor();
    n.inputs.clear();
    if (id != loss.id) {
      n.owned = Tensor();
      n.freed = true;
    }
  }
}

void Graph::clear() {
  nodes_.clear();
  consumed_ = false;
}

void Graph::check_open() const {
  if (consumed_) throw std::logic_error("graph already consumed by backward(); call clear() first");
}

}  // namespace steerlm::ad
