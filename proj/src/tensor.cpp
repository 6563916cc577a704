#include "ssgan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "ssgan/error.hpp"

namespace ssgan {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

std::vector<float>& Node::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0f);
  return grad;
}

void Node::accumulate(std::span<const float> g) {
  auto& buf = grad_buffer();
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
}

}  // namespace detail

Tensor::Tensor() = default;

Tensor::Tensor(Shape shape, float fill, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
  const auto n = shape_numel(shape);
  node_->shape = std::move(shape);
  node_->data.assign(n, fill);
  node_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<float> values, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_string(shape) + " holds " +
                         std::to_string(shape_numel(shape)) +
                         " values, got " + std::to_string(values.size()));
  }
  node_->shape = std::move(shape);
  node_->data = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(float value, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<float>{value}, requires_grad);
}

Tensor Tensor::from_node(std::shared_ptr<detail::Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

namespace {

detail::Node& checked(const std::shared_ptr<detail::Node>& node) {
  if (!node) throw ContractError("use of an empty tensor");
  return *node;
}

}  // namespace

const Shape& Tensor::shape() const { return checked(node_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " +
                         shape_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return checked(node_).data.size(); }

std::span<float> Tensor::data() { return checked(node_).data; }
std::span<const float> Tensor::data() const { return checked(node_).data; }

float Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item() on tensor of shape " + shape_string(shape()));
  }
  return node_->data[0];
}

bool Tensor::requires_grad() const { return checked(node_).requires_grad; }
void Tensor::set_requires_grad(bool on) { checked(node_).requires_grad = on; }
bool Tensor::has_grad() const { return !checked(node_).grad.empty(); }

std::span<float> Tensor::grad() { return checked(node_).grad_buffer(); }
std::span<const float> Tensor::grad() const {
  return checked(node_).grad_buffer();
}

void Tensor::zero_grad() { checked(node_).grad.clear(); }

Tensor Tensor::detach() const {
  const auto& n = checked(node_);
  return Tensor(n.shape, n.data, false);
}

Tensor Tensor::clone() const {
  const auto& n = checked(node_);
  Tensor t(n.shape, n.data, n.requires_grad);
  t.node_->grad = n.grad;
  return t;
}

Tensor Tensor::reshape(Shape new_shape) const {
  const auto& n = checked(node_);
  if (shape_numel(new_shape) != n.data.size()) {
    throw DimensionError("cannot reshape " + shape_string(n.shape) + " to " +
                         shape_string(new_shape));
  }
  return make_result(std::move(new_shape), n.data, {*this},
                     [](detail::Node& self) {
                       auto& p = *self.parents[0];
                       if (p.requires_grad) p.accumulate(self.grad);
                     });
}

void Tensor::backward() {
  auto& root = checked(node_);
  if (root.data.size() != 1) {
    throw ContractError("backward() needs a scalar, got shape " +
                        shape_string(root.shape));
  }
  if (!root.requires_grad) {
    throw ContractError("backward() on a value that depends on no tensor "
                        "requiring grad");
  }

  // Iterative post-order DFS gives a topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(&root, 0);
  seen.insert(&root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      auto* parent = node->parents[next++].get();
      if (parent->requires_grad && !seen.count(parent)) {
        seen.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.grad_buffer()[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
  for (auto* node : order) {
    if (node->backward_fn) {
      node->backward_fn = nullptr;
      node->parents.clear();
      node->grad.clear();
      node->grad.shrink_to_fit();
    }
  }
}

Tensor make_result(Shape shape, std::vector<float> values,
                   std::initializer_list<Tensor> inputs,
                   std::function<void(detail::Node&)> backward_fn) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (needs) {
    node->requires_grad = true;
    for (const auto& in : inputs) node->parents.push_back(in.node());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor::from_node(std::move(node));
}

bool all_finite(std::span<const float> values) {
  return std::all_of(values.begin(), values.end(),
                     [](float v) { return std::isfinite(v); });
}

}  // namespace ssgan
