#pragma once

#include "jdsi/nn/tensor.hpp"

#include <functional>
#include <memory>
#include <optional>

namespace jdsi::nn {

template <typename T>
struct Node
{
  Tensor<T> value;
  std::vector<T> grad; // empty until a gradient reaches this node
  bool requires_grad = false;
  std::function<void(Node &)> backward_fn;

  std::vector<T> &grad_buffer()
  {
    if (grad.empty()) {
      grad.assign(value.size(), T(0));
    }
    return grad;
  }
  Shape const &shape() const { return value.shape; }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

template <typename T>
Var<T> leaf(Tensor<T> value, bool requires_grad)
{
  auto v = std::make_shared<Node<T>>();
  v->value = std::move(value);
  v->requires_grad = requires_grad;
  return v;
}

template <typename T>
Var<T> constant(Tensor<T> value)
{
  return leaf(std::move(value), false);
}

/// Records operations in execution order so gradients can be replayed in
/// reverse. A non-recording tape evaluates the same ops without keeping any
/// backward state.
template <typename T>
class Tape
{
public:
  explicit Tape(bool recording = true)
    : recording_(recording)
  {
  }

  bool recording() const { return recording_; }

  /// Wraps an op result. `fn` receives the output node and pushes its
  /// gradient into the parents captured by the closure.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> parents, std::function<void(Node<T> &)> fn)
  {
    auto out = std::make_shared<Node<T>>();
    out->value = std::move(value);
    for (auto const &p : parents) {
      if (p && p->requires_grad) {
        out->requires_grad = true;
      }
    }
    if (recording_ && out->requires_grad) {
      out->backward_fn = std::move(fn);
      nodes_.push_back(out);
    }
    return out;
  }

  /// Reverse sweep from `out`. A scalar output is seeded with 1 unless an
  /// explicit upstream gradient is given.
  void backward(Var<T> const &out, std::optional<std::vector<T>> upstream = std::nullopt)
  {
    if (nodes_.empty() || !out || !out->backward_fn) {
      throw UsageError("backward called without a recorded forward pass for this output");
    }
    auto &g = out->grad_buffer();
    if (upstream) {
      if (upstream->size() != g.size()) {
        throw ShapeError("upstream gradient does not match output shape");
      }
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] += (*upstream)[i];
      }
    } else {
      if (g.size() != 1) {
        throw UsageError("backward from a non-scalar output needs an upstream gradient");
      }
      g[0] += T(1);
    }
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node<T> &node = **it;
      if (!node.grad.empty() && node.backward_fn) {
        node.backward_fn(node);
      }
    }
  }

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

private:
  bool recording_;
  std::vector<Var<T>> nodes_;
};

/// Accumulate `g` into the parent's gradient if it wants one.
template <typename T>
inline std::vector<T> *grad_of(Var<T> const &p)
{
  return p && p->requires_grad ? &p->grad_buffer() : nullptr;
}

} // namespace jdsi::nn
