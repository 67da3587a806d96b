#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace metarecon {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;

namespace detail {

/// Backward closure: given the gradient flowing into a node's output and a
/// mask of which inputs need a gradient, return one gradient per input (an
/// empty Tensor where none is needed). Closures are written in terms of
/// differentiable ops, so running them with grad mode on records a graph of
/// the backward pass itself.
using BackwardFn =
    std::function<std::vector<Tensor>(const Tensor& grad_out, const std::vector<bool>& needs)>;

struct Node {
  std::vector<Tensor> inputs;
  BackwardFn backward;
  const char* op = "leaf";
};

}  // namespace detail

/// Dense row-major array of doubles. Values are immutable after
/// construction; copies share storage. A tensor that requires grad carries a
/// node in the gradient graph (a leaf for parameters, an op node otherwise).
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t numel() const { return data_ ? data_->size() : 0; }
  bool defined() const { return data_ != nullptr; }

  std::span<const double> data() const;
  double operator[](std::size_t i) const { return (*data_)[i]; }
  /// Value of a one-element tensor.
  double item() const;

  bool requires_grad() const { return node_ != nullptr; }
  /// Returns a leaf sharing this tensor's values with the given flag.
  Tensor detach(bool requires_grad = false) const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

  /// Builds an op result. A node is attached only when grad mode is on and
  /// at least one input requires grad.
  static Tensor from_op(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                        detail::BackwardFn backward, const char* op);

 private:
  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
  std::shared_ptr<detail::Node> node_;
};

bool grad_enabled();

/// Scoped override of the thread-local grad mode.
class GradModeGuard {
 public:
  explicit GradModeGuard(bool enabled);
  ~GradModeGuard();
  GradModeGuard(const GradModeGuard&) = delete;
  GradModeGuard& operator=(const GradModeGuard&) = delete;

 private:
  bool previous_;
};

struct NoGradGuard : GradModeGuard {
  NoGradGuard() : GradModeGuard(false) {}
};

/// Gradients of a scalar `output` with respect to each of `inputs`. Inputs not
/// reachable from the output receive exact zeros. With create_graph the
/// returned gradients are themselves differentiable.
std::vector<Tensor> grad(const Tensor& output, std::span<const Tensor> inputs,
                         bool create_graph = false);

/// Reverse pass over the whole graph: d(loss)/d(param) for every param.
std::vector<Tensor> backward(const Tensor& loss, std::span<const Tensor> params);

}  // namespace metarecon
