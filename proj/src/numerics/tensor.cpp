#include "etd/numerics/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

#include "etd/error.hpp"

namespace etd {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

std::uint64_t next_tensor_id() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

}  // namespace detail

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one axis");
  for (auto s : shape) {
    if (s == 0) throw DimensionError("tensor shape " + shape_str(shape) + " has a zero axis");
  }
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  check_shape(shape);
  std::vector<double> data(shape_numel(shape), value);
  return from(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  check_shape(shape);
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("shape " + shape_str(shape) + " does not match " + std::to_string(data.size()) +
                         " values");
  }
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  node->id = detail::next_tensor_id();
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

detail::TensorNode& Tensor::node() const {
  if (!node_) throw ContractError("use of an undefined tensor");
  return *node_;
}

const Shape& Tensor::shape() const { return node().shape; }
std::size_t Tensor::numel() const { return node().data.size(); }

std::size_t Tensor::rows() const { return shape().front(); }

std::size_t Tensor::cols() const {
  const auto& s = shape();
  return s.size() == 1 ? 1 : s.back();
}

std::span<const double> Tensor::data() const { return node().data; }

std::span<double> Tensor::mutable_data() { return node().data; }

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node().data[0];
}

double Tensor::at(std::size_t r, std::size_t c) const { return node().data[r * cols() + c]; }

bool Tensor::requires_grad() const { return node().requires_grad; }
bool Tensor::has_grad() const { return !node().grad.empty(); }
std::span<const double> Tensor::grad() const { return node().grad; }
std::span<double> Tensor::mutable_grad() { return node().grad; }

void Tensor::zero_grad() {
  auto& n = node();
  if (n.requires_grad) n.grad.assign(n.data.size(), 0.0);
}

std::uint64_t Tensor::id() const { return node().id; }
const char* Tensor::op_name() const { return node().op; }

Tensor Tensor::detach(bool requires_grad) const { return from(shape(), node().data, requires_grad); }

BackwardStats Tensor::backward() const {
  auto& root = node();
  if (root.data.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_str(root.shape));
  }
  if (!root.requires_grad) throw ContractError("backward() on a loss that does not require grad");

  // Iterative post-order DFS gives a topological order: inputs before outputs.
  std::vector<detail::TensorNode*> order;
  std::unordered_set<const detail::TensorNode*> seen;
  std::vector<std::pair<detail::TensorNode*, std::size_t>> stack;
  stack.emplace_back(&root, 0);
  seen.insert(&root);
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      detail::TensorNode* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (auto* n : order) {
    if (!n->is_leaf() || n->grad.size() != n->data.size()) {
      n->grad.assign(n->data.size(), 0.0);
    }
  }
  root.grad[0] += 1.0;

  BackwardStats stats;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!(*it)->is_leaf()) {
      (*it)->backward_fn(**it);
      ++stats.ops_visited;
    }
  }
  return stats;
}

}  // namespace etd
