#include "mstr/numerics/autograd.hpp"

#include <unordered_set>

#include "mstr/errors.hpp"

namespace mstr {

Tensor& detail::Node::grad_buffer() {
  if (grad.empty()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

Var Var::constant(Tensor value) {
  auto n = std::make_shared<detail::Node>();
  n->value = std::move(value);
  n->op = "constant";
  return Var(std::move(n));
}

Var Var::leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<detail::Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return Var(std::move(n));
}

const Tensor& Var::grad() const {
  if (node_->grad.empty()) node_->grad_buffer();
  return node_->grad;
}

void Var::zero_grad() {
  if (node_ && !node_->grad.empty()) node_->grad.fill(0.0);
}

Var Var::make(Tensor value, const char* op, std::vector<Var> inputs,
              std::function<void(detail::Node&)> fn) {
  auto n = std::make_shared<detail::Node>();
  n->value = std::move(value);
  n->op = op;
  bool any = false;
  for (const auto& v : inputs) any = any || v.requires_grad();
  if (any) {
    n->requires_grad = true;
    n->inputs.reserve(inputs.size());
    for (auto& v : inputs) n->inputs.push_back(std::move(v.node_));
    n->backward = std::move(fn);
  }
  return Var(std::move(n));
}

void Var::backward() const {
  if (node_->value.size() != 1)
    throw DimensionError("backward() without seed requires a single-element value");
  backward(Tensor(node_->value.shape(), 1.0));
}

void Var::backward(const Tensor& seed) const {
  if (!node_->requires_grad) return;
  if (!seed.same_shape(node_->value)) throw DimensionError("backward seed shape mismatch");

  // Iterative post-order DFS: `order` ends up topologically sorted (inputs first).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      detail::Node* child = n->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  Tensor& g = node_->grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

}  // namespace mstr
