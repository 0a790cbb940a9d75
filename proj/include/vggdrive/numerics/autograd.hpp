// Copyright 2026 The vggdrive-toy Authors
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

#ifndef VGGDRIVE__NUMERICS__AUTOGRAD_HPP_
#define VGGDRIVE__NUMERICS__AUTOGRAD_HPP_

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "vggdrive/numerics/tensor.hpp"

namespace vggdrive
{

/**
 * @brief Named tensor with an accumulated gradient.
 *
 * Frozen parameters (trainable == false) enter a graph as constants, so no
 * gradient ever reaches them and optimizers skip them.
 */
struct Parameter
{
  Parameter() = default;
  Parameter(std::string name_, Tensor value_, bool trainable_ = true)
  : name(std::move(name_)), value(std::move(value_)), grad(value.shape()), trainable(trainable_)
  {
  }

  void zero_grad() const { grad.fill(0.0); }

  std::string name;
  Tensor value;
  // Accumulator written by backward(); mutable so const forward passes can bind leaves.
  mutable Tensor grad;
  bool trainable{true};
};

using ParameterList = std::vector<Parameter *>;

namespace detail
{

struct Node
{
  Tensor value;
  Tensor grad;
  bool has_grad{false};
  bool requires_grad{false};
  const Parameter * param{nullptr};
  std::vector<std::shared_ptr<Node>> inputs;
  // Adds this node's vector-Jacobian product into the inputs' gradients.
  std::function<void(Node &)> backward;

  Tensor & grad_buffer()
  {
    if (!has_grad) {
      grad = Tensor(value.shape(), 0.0);
      has_grad = true;
    }
    return grad;
  }
};

}  // namespace detail

namespace detail
{

inline bool & grad_mode()
{
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

/// While alive, parameters enter graphs as constants on this thread.
class NoGradGuard
{
public:
  NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard &) = delete;
  NoGradGuard & operator=(const NoGradGuard &) = delete;

private:
  bool previous_;
};

/// Handle to a value recorded in a computation graph.
class Var
{
public:
  Var() = default;
  explicit Var(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  static Var constant(Tensor value)
  {
    auto n = std::make_shared<detail::Node>();
    n->value = std::move(value);
    return Var(std::move(n));
  }

  /// Leaf bound to `p`; gradients flow into p.grad only when p is trainable.
  static Var param(const Parameter & p)
  {
    auto n = std::make_shared<detail::Node>();
    n->value = p.value;
    n->param = &p;
    n->requires_grad = p.trainable && detail::grad_mode();
    return Var(std::move(n));
  }

  const Tensor & value() const { return node_->value; }
  const Shape & shape() const { return node_->value.shape(); }
  std::size_t dim(int axis) const { return node_->value.dim(axis); }
  bool requires_grad() const { return node_->requires_grad; }
  bool valid() const { return static_cast<bool>(node_); }
  const std::shared_ptr<detail::Node> & node() const { return node_; }

private:
  std::shared_ptr<detail::Node> node_;
};

namespace detail
{

/// Records an op output. The closure only runs when some input needs a gradient.
inline Var make_result(
  Tensor value, std::vector<Var> inputs, std::function<void(Node &)> backward)
{
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const auto & in : inputs) {
    n->requires_grad = n->requires_grad || in.requires_grad();
  }
  if (n->requires_grad) {
    n->inputs.reserve(inputs.size());
    for (auto & in : inputs) {
      n->inputs.push_back(in.node());
    }
    n->backward = std::move(backward);
  }
  return Var(std::move(n));
}

inline bool wants_grad(const Node & self, std::size_t i)
{
  return self.inputs[i]->requires_grad;
}

}  // namespace detail

/**
 * @brief Reverse pass from a scalar loss.
 *
 * Intermediate gradients are recomputed on every call; parameter gradients
 * accumulate across calls until zeroed explicitly.
 */
inline void backward(const Var & loss)
{
  if (!loss.valid() || loss.value().numel() != 1) {
    throw ContractError(
      "backward requires a scalar loss, got shape " +
      (loss.valid() ? shape_str(loss.shape()) : std::string("<empty>")));
  }
  if (!loss.requires_grad()) {
    return;
  }

  std::vector<detail::Node *> order;
  std::unordered_set<detail::Node *> seen;
  std::vector<std::pair<detail::Node *, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto & [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node * child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (auto * n : order) {
    n->has_grad = false;
  }
  loss.node()->grad_buffer().fill(1.0);

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node * n = *it;
    if (!n->has_grad) {
      continue;
    }
    if (n->backward) {
      n->backward(*n);
    }
    if (n->param != nullptr && n->param->trainable) {
      auto dst = n->param->grad.data();
      auto src = n->grad.data();
      for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] += src[i];
      }
    }
  }
}

inline void zero_grads(const ParameterList & params)
{
  for (auto * p : params) {
    p->zero_grad();
  }
}

}  // namespace vggdrive

#endif  // VGGDRIVE__NUMERICS__AUTOGRAD_HPP_
