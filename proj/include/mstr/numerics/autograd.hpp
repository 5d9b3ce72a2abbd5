#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mstr/numerics/tensor.hpp"

namespace mstr {

namespace detail {

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(Node&)> backward;

  Tensor& grad_buffer();
};

}  // namespace detail

// Handle to a value in a dynamically recorded reverse-mode graph. Every op
// result keeps its inputs alive, so the graph lives exactly as long as the
// handles referring to its outputs.
class Var {
 public:
  Var() = default;

  static Var constant(Tensor value);
  static Var leaf(Tensor value, bool requires_grad = true);

  bool defined() const { return node_ != nullptr; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  const char* op() const { return node_->op; }

  // In-place access to leaf storage (optimizer updates, checkpoint loads).
  Tensor& mutable_value() { return node_->value; }

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  const Tensor& grad() const;
  Tensor& mutable_grad() { return node_->grad_buffer(); }
  void zero_grad();

  // Seeds d(this)/d(this) = 1 for a single-element value, or `seed` when given.
  void backward() const;
  void backward(const Tensor& seed) const;

  // Builds an op node. `fn` may be empty when no input requires a gradient.
  static Var make(Tensor value, const char* op, std::vector<Var> inputs,
                  std::function<void(detail::Node&)> fn);

  detail::Node* node() const { return node_.get(); }

 private:
  explicit Var(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;
};

// Accumulates `g` into the gradient of input `i` of `self`, when it requires one.
inline Tensor* input_grad(detail::Node& self, std::size_t i) {
  auto& in = self.inputs[i];
  return in->requires_grad ? &in->grad_buffer() : nullptr;
}

}  // namespace mstr
