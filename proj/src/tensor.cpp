#include <algorithm>
#include <unordered_set>

#include "chartab/engine.hpp"
#include "chartab/error.hpp"

namespace chartab::engine {

namespace {

bool& grad_flag() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace

std::string Shape::str() const {
  return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

std::span<double> detail::Node::grad_buffer() {
  if (grad.empty()) grad.assign(shape.numel(), 0.0);
  return grad;
}

bool grad_enabled() { return grad_flag(); }

GradModeGuard::GradModeGuard(bool enabled) : previous_(grad_flag()) { grad_flag() = enabled; }
GradModeGuard::~GradModeGuard() { grad_flag() = previous_; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return from(shape, std::vector<double>(shape.numel(), 0.0), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (values.size() != shape.numel()) {
    throw ShapeError("tensor data has " + std::to_string(values.size()) +
                     " elements, shape " + shape.str() + " needs " +
                     std::to_string(shape.numel()));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = shape;
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1, 1}, {value}, requires_grad);
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape().str());
  return node_->value[0];
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach(bool requires_grad) const {
  return from(shape(), node_->value, requires_grad);
}

void Tensor::backward() const {
  if (numel() != 1) throw ShapeError("backward requires a scalar loss, got " + shape().str());
  if (!node_->requires_grad) return;

  // Iterative post-order DFS; parents precede children in `order`.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior gradients are recomputed from scratch; leaves accumulate.
  for (detail::Node* node : order) {
    if (node->backward) node->grad.assign(node->shape.numel(), 0.0);
  }
  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

}  // namespace chartab::engine
