#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "matrix_trader/nets/tensor.hpp"

namespace mtrader::nets {

class UnsupportedPrimitive : public Error {
 public:
  using Error::Error;
};

template <class T>
struct Node {
  Tensor<T> value;
  std::vector<T> grad;  // allocated on first accumulation
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward;
  std::string op = "leaf";
  bool requires_grad = false;

  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
  bool parent_wants_grad(std::size_t i) const { return parents[i]->requires_grad; }
};

// Handle to a node of the computation graph. Copies share the node.
template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Var constant(Tensor<T> value) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->op = "constant";
    return Var(std::move(n));
  }
  static Var parameter(Tensor<T> value) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->op = "parameter";
    n->requires_grad = true;
    return Var(std::move(n));
  }

  const Tensor<T>& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape; }
  std::size_t size() const { return node_->value.size(); }
  T item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return node_->value.data[0];
  }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Creates the result node of a primitive. When no input needs a gradient the
// node is a plain constant and the backward closure is dropped.
template <class T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> inputs, std::string op,
                   std::function<void(Node<T>&)> backward) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->op = std::move(op);
  for (const auto& in : inputs) n->requires_grad = n->requires_grad || in.requires_grad();
  if (n->requires_grad) {
    for (auto& in : inputs) n->parents.push_back(in.node());
    n->backward = std::move(backward);
  }
  return Var<T>(std::move(n));
}

// A node with parents but no derivative rule; reaching it in gradients() is an error.
template <class T>
Var<T> opaque(Tensor<T> value, std::vector<Var<T>> inputs, std::string op) {
  return make_result<T>(std::move(value), std::move(inputs), std::move(op), nullptr);
}

// Reverse-mode derivatives of a scalar `loss` with respect to each of `wrt`.
// Inputs that do not influence the loss get zero gradients.
template <class T>
std::vector<Tensor<T>> gradients(const Var<T>& loss, std::span<const Var<T>> wrt) {
  if (loss.size() != 1) throw ShapeError("gradients() needs a scalar loss, got " + shape_str(loss.shape()));
  std::vector<Node<T>*> order;
  for (const auto& v : wrt) v.node()->grad.clear();
  if (loss.requires_grad()) {
    std::unordered_set<Node<T>*> visited;
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{loss.node().get(), 0}};
    visited.insert(loss.node().get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        Node<T>* p = node->parents[next++].get();
        if (p->requires_grad && visited.insert(p).second) stack.push_back({p, 0});
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
    for (Node<T>* n : order) n->grad.clear();
    loss.node()->grad_buffer()[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node<T>* n = *it;
      if (n->parents.empty() || n->grad.empty()) continue;
      if (!n->backward) throw UnsupportedPrimitive("no derivative rule for primitive '" + n->op + "'");
      n->backward(*n);
    }
  }
  std::vector<Tensor<T>> out;
  out.reserve(wrt.size());
  for (const auto& v : wrt) {
    Tensor<T> g(v.shape());
    if (!v.node()->grad.empty()) g.data = v.node()->grad;
    out.push_back(std::move(g));
  }
  for (Node<T>* n : order) {
    if (!n->parents.empty()) n->grad.clear();
  }
  return out;
}

template <class T>
std::vector<Tensor<T>> gradients(const Var<T>& loss, std::initializer_list<Var<T>> wrt) {
  std::vector<Var<T>> v(wrt);
  return gradients(loss, std::span<const Var<T>>(v));
}

}  // namespace mtrader::nets
