#include "ash/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "ash/errors.hpp"

namespace ash {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  bool leaf = true;
  bool released = false;
  std::uint64_t seq = 0;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;
};

}  // namespace detail

namespace {

thread_local std::uint64_t g_sequence = 0;
thread_local bool g_grad_enabled = true;

std::shared_ptr<detail::Node> make_node(Shape shape, std::vector<double> values) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor data length " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->seq = ++g_sequence;
  return node;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) noexcept {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
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

Tensor::Tensor(Shape shape, double fill) {
  const auto n = shape_numel(shape);
  node_ = make_node(std::move(shape), std::vector<double>(n, fill));
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : node_(make_node(std::move(shape), std::move(values))) {}

Tensor Tensor::scalar(double value) { return Tensor(Shape{1}, std::vector<double>{value}); }

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = stddev * rng.normal();
  return Tensor(std::move(shape), std::move(v));
}

Tensor Tensor::uniform(Shape shape, Rng& rng, double lo, double hi) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v));
}

const Shape& Tensor::shape() const {
  if (!node_) throw ContractError("use of undefined tensor");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

std::span<const double> Tensor::data() const {
  shape();
  return node_->data;
}

std::span<double> Tensor::mutable_data() {
  shape();
  return node_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

std::vector<double> Tensor::to_vector() const {
  auto d = data();
  return {d.begin(), d.end()};
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  shape();
  if (!node_->leaf) throw ContractError("set_requires_grad on a non-leaf tensor");
  node_->requires_grad = flag;
  return *this;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw ContractError("tensor " + shape_str(shape()) + " has no gradient");
  return node_->grad;
}

std::span<double> Tensor::grad_buffer() const {
  shape();
  if (node_->grad.empty()) node_->grad.assign(node_->data.size(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() {
  shape();
  node_->grad.assign(node_->data.size(), 0.0);
}

void Tensor::clear_grad() {
  if (node_) {
    node_->grad.clear();
    node_->grad.shrink_to_fit();
  }
}

std::uint64_t Tensor::sequence() const {
  shape();
  return node_->seq;
}

bool Tensor::is_leaf() const {
  shape();
  return node_->leaf;
}

Tensor Tensor::detach() const {
  // Shares nothing with the graph; values are copied so later in-place edits
  // on either side stay independent.
  return Tensor(shape(), node_->data);
}

Tensor Tensor::clone() const { return detach(); }

void Tensor::backward() const {
  if (!node_) throw ContractError("backward on undefined tensor");
  if (node_->data.size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " + shape_str(node_->shape));
  }
  if (node_->released) throw ContractError("graph already released by a previous backward");
  if (!node_->requires_grad) throw ContractError("loss does not depend on any tensor requiring grad");

  // Collect the interior nodes reachable from the loss.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> marked;
  std::vector<detail::Node*> stack{node_.get()};
  while (!stack.empty()) {
    detail::Node* n = stack.back();
    stack.pop_back();
    if (n->leaf || !n->requires_grad || !marked.insert(n).second) continue;
    order.push_back(n);
    for (auto& p : n->parents) stack.push_back(p.get());
  }
  std::sort(order.begin(), order.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->seq > b->seq; });

  node_->grad.assign(1, 1.0);
  for (detail::Node* n : order) {
    if (!n->grad.empty() && n->backward) n->backward(n->grad, n->data);
  }
  // Releasing one node can drop the last reference to another still listed
  // in `order`; keep every parent alive until the sweep is done.
  std::vector<std::shared_ptr<detail::Node>> hold;
  for (detail::Node* n : order) hold.insert(hold.end(), n->parents.begin(), n->parents.end());
  for (detail::Node* n : order) {
    n->backward = nullptr;
    n->parents.clear();
    n->released = true;
    if (n != node_.get()) {
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
  }
}

Tensor record_op(Shape shape, std::vector<double> values, const std::vector<Tensor>& inputs,
                 BackwardFn backward) {
  auto node = make_node(std::move(shape), std::move(values));
  if (g_grad_enabled) {
    for (const auto& in : inputs) {
      if (in.requires_grad()) {
        node->requires_grad = true;
        node->parents.push_back(in.node_);
      }
    }
  }
  if (node->requires_grad) {
    node->leaf = false;
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() noexcept : previous_(g_grad_enabled) { g_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

}  // namespace ash
