#pragma once

#include <concepts>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "msea/error.hpp"
#include "msea/numerics/tensor.hpp"

namespace msea::num {

template <std::floating_point T>
class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while the tape lives.
template <std::floating_point T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::uint32_t id) : tape_{tape}, id_{id} {}

  [[nodiscard]] bool valid() const { return tape_ != nullptr; }
  [[nodiscard]] Tape<T>& tape() const { return *tape_; }
  [[nodiscard]] std::uint32_t id() const { return id_; }
  [[nodiscard]] const Shape& shape() const { return tape_->shape(id_); }
  [[nodiscard]] std::span<const T> value() const { return tape_->value(id_); }
  [[nodiscard]] std::size_t size() const { return shape().size(); }
  /// Value of a one-element variable.
  [[nodiscard]] T item() const { return value()[0]; }

 private:
  Tape<T>* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Records primitive operations in creation order so that a backward sweep over
/// decreasing node ids is a reverse topological traversal.
///
/// Parameter leaves reference the caller's Tensor storage; the tensor must outlive
/// the tape, and its gradient buffer receives the accumulated gradient.
template <std::floating_point T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::span<const T>)>;

  explicit Tape(bool recording = true) : recording_{recording} {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  [[nodiscard]] bool recording() const { return recording_; }
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

  Var<T> constant(const Tensor<T>& t) {
    return emplace(t.shape(), std::vector<T>(t.data().begin(), t.data().end()), false, nullptr);
  }
  Var<T> constant(Shape shape, std::vector<T> value) {
    if (value.size() != shape.size()) {
      throw DimensionError("constant of shape " + shape.str() + " given " +
                           std::to_string(value.size()) + " values");
    }
    return emplace(shape, std::move(value), false, nullptr);
  }
  Var<T> scalar(T v) { return emplace(Shape::scalar(), std::vector<T>{v}, false, nullptr); }
  Var<T> zeros(Shape shape) { return emplace(shape, std::vector<T>(shape.size(), T{0}), false, nullptr); }

  /// Leaf bound to `t`. Gradients flow into t.grad() only when t tracks gradients.
  Var<T> param(Tensor<T>& t) {
    if (t.empty()) throw DimensionError("cannot bind an empty tensor as a parameter");
    Node node;
    node.shape = t.shape();
    node.leaf = &t;
    node.needs_grad = recording_ && t.tracks_grad();
    nodes_.push_back(std::move(node));
    return Var<T>{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  /// Appends an operation result. `fn` receives the output gradient and must
  /// accumulate into the inputs' gradients via grad().
  Var<T> push(Shape shape, std::vector<T> value, std::initializer_list<Var<T>> inputs, Backward fn) {
    bool needs = false;
    if (recording_) {
      for (const auto& v : inputs) needs = needs || nodes_[v.id()].needs_grad;
    }
    return emplace(shape, std::move(value), needs, needs ? std::move(fn) : nullptr);
  }
  Var<T> push(Shape shape, std::vector<T> value, std::span<const Var<T>> inputs, Backward fn) {
    bool needs = false;
    if (recording_) {
      for (const auto& v : inputs) needs = needs || nodes_[v.id()].needs_grad;
    }
    return emplace(shape, std::move(value), needs, needs ? std::move(fn) : nullptr);
  }

  [[nodiscard]] const Shape& shape(std::uint32_t id) const { return nodes_[id].shape; }
  [[nodiscard]] bool needs_grad(std::uint32_t id) const { return nodes_[id].needs_grad; }

  [[nodiscard]] std::span<const T> value(std::uint32_t id) const {
    const Node& n = nodes_[id];
    if (n.leaf != nullptr) return std::as_const(*n.leaf).data();
    return n.value;
  }

  /// Gradient accumulator of node `id`, allocated on first use.
  std::span<T> grad(std::uint32_t id) {
    Node& n = nodes_[id];
    if (n.leaf != nullptr) return n.leaf->grad();
    if (n.grad.empty()) n.grad.assign(n.shape.size(), T{0});
    return n.grad;
  }

  /// Reverse sweep from a scalar loss. Leaf gradients accumulate (call zero_grad
  /// on parameters between steps).
  void backward(const Var<T>& loss, T seed = T{1}) {
    if (!loss.valid() || &loss.tape() != this) {
      throw std::logic_error("backward: loss was not recorded on this tape");
    }
    if (!loss.shape().is_scalar()) {
      throw DimensionError("backward: loss must be scalar, got " + loss.shape().str());
    }
    if (!nodes_[loss.id()].needs_grad) {
      throw std::logic_error("backward: loss is detached from every tracked leaf");
    }
    order_.clear();
    grad(loss.id())[0] += seed;
    for (std::int64_t i = loss.id(); i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.needs_grad || !n.backward || n.grad.empty()) continue;
      order_.push_back(static_cast<std::uint32_t>(i));
      // The closure may allocate grads of earlier nodes; n.grad itself stays put.
      n.backward(*this, std::span<const T>(n.grad));
    }
  }

  /// Node ids whose local rule ran during the last backward(), in visiting order.
  [[nodiscard]] const std::vector<std::uint32_t>& backward_order() const { return order_; }

 private:
  struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    Tensor<T>* leaf = nullptr;
    bool needs_grad = false;
    Backward backward;
  };

  Var<T> emplace(Shape shape, std::vector<T> value, bool needs, Backward fn) {
    Node node;
    node.shape = shape;
    node.value = std::move(value);
    node.needs_grad = needs;
    node.backward = std::move(fn);
    nodes_.push_back(std::move(node));
    return Var<T>{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  bool recording_;
  std::vector<Node> nodes_;
  std::vector<std::uint32_t> order_;
};

}  // namespace msea::num
