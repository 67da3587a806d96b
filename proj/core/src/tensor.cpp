#include "metarecon/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "metarecon/errors.hpp"
#include "metarecon/ops.hpp"

namespace metarecon {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
  if (shape_numel(shape_) != values.size()) {
    throw ShapeError("tensor shape " + shape_str(shape_) + " does not match " +
                     std::to_string(values.size()) + " values");
  }
  data_ = std::make_shared<const std::vector<double>>(std::move(values));
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

std::span<const double> Tensor::data() const {
  if (!data_) return {};
  return {data_->data(), data_->size()};
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
  return (*data_)[0];
}

Tensor Tensor::detach(bool requires_grad) const {
  Tensor out;
  out.shape_ = shape_;
  out.data_ = data_;
  if (requires_grad) out.node_ = std::make_shared<detail::Node>();
  return out;
}

Tensor Tensor::from_op(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                       detail::BackwardFn backward, const char* op) {
  Tensor out(std::move(shape), std::move(values));
  if (!grad_enabled()) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return out;
  auto node = std::make_shared<detail::Node>();
  node->inputs = std::move(inputs);
  node->backward = std::move(backward);
  node->op = op;
  out.node_ = std::move(node);
  return out;
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

GradModeGuard::GradModeGuard(bool enabled) : previous_(g_grad_enabled) {
  g_grad_enabled = enabled;
}

GradModeGuard::~GradModeGuard() { g_grad_enabled = previous_; }

std::vector<Tensor> grad(const Tensor& output, std::span<const Tensor> inputs,
                         bool create_graph) {
  if (output.numel() != 1) {
    throw ShapeError("grad() needs a scalar output, got " + shape_str(output.shape()));
  }
  std::vector<Tensor> result;
  result.reserve(inputs.size());

  using detail::Node;
  std::unordered_set<const Node*> targets;
  for (const auto& in : inputs) {
    if (in.requires_grad()) targets.insert(in.node().get());
  }
  if (!output.requires_grad() || targets.empty()) {
    for (const auto& in : inputs) result.push_back(Tensor::zeros(in.shape()));
    return result;
  }

  // Post-order DFS gives a topological order (parents before children).
  // `reaches` marks nodes with a path to some requested input; everything
  // else is pruned from the reverse sweep.
  std::vector<const Node*> order;
  std::unordered_map<const Node*, bool> reaches;
  {
    struct Frame {
      const Node* node;
      std::size_t next;
    };
    std::vector<Frame> stack{{output.node().get(), 0}};
    reaches.emplace(output.node().get(), false);
    while (!stack.empty()) {
      auto& top = stack.back();
      if (top.next < top.node->inputs.size()) {
        const auto& in = top.node->inputs[top.next++];
        if (!in.requires_grad()) continue;
        const Node* child = in.node().get();
        if (reaches.emplace(child, false).second) stack.push_back({child, 0});
        continue;
      }
      bool r = targets.count(top.node) > 0;
      for (const auto& in : top.node->inputs) {
        if (in.requires_grad() && reaches[in.node().get()]) r = true;
      }
      reaches[top.node] = r;
      order.push_back(top.node);
      stack.pop_back();
    }
  }

  GradModeGuard mode(create_graph);
  std::unordered_map<const Node*, Tensor> grads;
  grads.emplace(output.node().get(), Tensor::full(output.shape(), 1.0));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Node* node = *it;
    if (!reaches[node] || !node->backward) continue;
    auto found = grads.find(node);
    if (found == grads.end()) continue;
    const Tensor g = found->second;
    // Targets that are interior nodes keep their accumulated gradient.
    if (!targets.count(node)) grads.erase(found);

    std::vector<bool> needs(node->inputs.size(), false);
    bool any = false;
    for (std::size_t k = 0; k < node->inputs.size(); ++k) {
      const auto& in = node->inputs[k];
      needs[k] = in.requires_grad() && reaches[in.node().get()];
      any = any || needs[k];
    }
    if (!any) continue;
    auto input_grads = node->backward(g, needs);
    for (std::size_t k = 0; k < node->inputs.size(); ++k) {
      if (!needs[k] || !input_grads[k].defined()) continue;
      const Node* child = node->inputs[k].node().get();
      auto [slot, inserted] = grads.try_emplace(child, input_grads[k]);
      if (!inserted) slot->second = add(slot->second, input_grads[k]);
    }
  }

  for (const auto& in : inputs) {
    auto found = in.requires_grad() ? grads.find(in.node().get()) : grads.end();
    if (found == grads.end()) {
      result.push_back(Tensor::zeros(in.shape()));
    } else {
      result.push_back(found->second);
    }
  }
  return result;
}

std::vector<Tensor> backward(const Tensor& loss, std::span<const Tensor> params) {
  return grad(loss, params, false);
}

}  // namespace metarecon
