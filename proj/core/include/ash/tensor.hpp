#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ash/rng.hpp"

namespace ash {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape) noexcept;
std::string shape_str(const Shape& shape);

namespace detail {
struct Node;
}

/// Dense row-major array of doubles that can take part in reverse-mode
/// differentiation.
///
/// A Tensor is a shared handle: copies alias the same storage and graph node.
/// Every op result records the inputs it was computed from together with a
/// backward rule. Each node carries a sequence number taken from a
/// thread-local counter, so sorting reachable nodes by that number recovers
/// the recording order, which is a valid topological order for backward.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);
  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0);
  static Tensor uniform(Shape shape, Rng& rng, double lo, double hi);

  bool defined() const noexcept { return node_ != nullptr; }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  /// Direct write access. Intended for parameters and constants; writing into
  /// an interior node that a pending backward pass depends on is undefined.
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t flat_index) const { return data()[flat_index]; }
  std::vector<double> to_vector() const;

  bool requires_grad() const;
  /// Marks a leaf as trainable. Only valid on leaves.
  Tensor& set_requires_grad(bool flag);

  bool has_grad() const;
  std::span<const double> grad() const;
  /// Returns the gradient accumulator, allocating it zero-filled on first use.
  std::span<double> grad_buffer() const;
  void zero_grad();
  void clear_grad();

  /// Reverse-mode sweep from this scalar. Populates grad() on every leaf that
  /// requires grad. The recorded graph is released afterwards, so a second
  /// call on the same result is a contract error.
  void backward() const;

  /// Same values, cut from the graph.
  Tensor detach() const;
  /// Deep copy of values as a new leaf (grad flags cleared).
  Tensor clone() const;

  std::uint64_t sequence() const;
  bool is_leaf() const;
  bool same_node(const Tensor& other) const noexcept { return node_ == other.node_; }

 private:
  friend Tensor record_op(Shape, std::vector<double>, const std::vector<Tensor>&,
                          std::function<void(std::span<const double>, std::span<const double>)>);
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::Node> node_;
};

/// Receives the upstream gradient of an op result together with the result's
/// forward values.
using BackwardFn = std::function<void(std::span<const double> grad_out, std::span<const double> out)>;

/// Creates an op result. When gradient recording is enabled and any input
/// requires grad, the result joins the graph and `backward` is invoked once
/// during the sweep. The closure accumulates into its inputs' grad_buffer().
Tensor record_op(Shape shape, std::vector<double> values, const std::vector<Tensor>& inputs,
                 BackwardFn backward);

bool grad_enabled() noexcept;

/// Disables graph recording for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() noexcept;
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace ash
