#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <string>
#include <string_view>

#include "p2lhap/tensor.hpp"

namespace p2lhap {

template <typename T>
class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
template <typename T>
class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape<T>& tape() const { return *tape_; }
  std::uint32_t id() const noexcept { return id_; }
  const BasicTensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(std::size_t axis) const { return value().dim(axis); }
  std::size_t size() const { return value().size(); }

 private:
  friend class Tape<T>;
  Var(Tape<T>* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape<T>* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Ordered record of primitive operations. Reverse replay accumulates one
/// gradient per node that (transitively) depends on a leaf requiring grad.
///
/// A tape is owned by one thread at a time. Nodes live in a deque so
/// references to stored values stay valid while new nodes are appended.
template <typename T>
class Tape {
 public:
  /// Receives the gradient flowing into the node's output.
  using Backward = std::function<void(Tape&, const BasicTensor<T>&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> leaf(BasicTensor<T> value, bool requires_grad = true) {
    nodes_.push_back(Node{std::move(value), {}, {}, requires_grad, "leaf"});
    return Var<T>(this, static_cast<std::uint32_t>(nodes_.size() - 1));
  }

  Var<T> constant(BasicTensor<T> value) { return leaf(std::move(value), false); }

  /// Appends an op result. Throws NumericalError if the value is not finite.
  Var<T> record(std::string_view op, BasicTensor<T> value, std::initializer_list<Var<T>> inputs,
                Backward backward) {
    if (!value.all_finite()) {
      throw NumericalError("non-finite value produced by " + std::string(op) + " with output shape " +
                           shape_string(value.shape()));
    }
    bool needs = false;
    for (const Var<T>& in : inputs) needs = needs || requires_grad(in);
    nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : Backward{}, needs,
                          std::string(op)});
    return Var<T>(this, static_cast<std::uint32_t>(nodes_.size() - 1));
  }

  const BasicTensor<T>& value(Var<T> v) const { return node(v).value; }
  bool requires_grad(Var<T> v) const { return node(v).requires_grad; }
  const std::string& op_name(Var<T> v) const { return node(v).op; }

  /// Gradient buffer of `v`, allocated on first use; nullptr when `v` does
  /// not require grad. Backward closures accumulate into it.
  BasicTensor<T>* grad_slot(Var<T> v) {
    Node& n = node(v);
    if (!n.requires_grad) return nullptr;
    if (n.grad.size() != n.value.size() || n.grad.shape() != n.value.shape()) {
      n.grad = BasicTensor<T>(n.value.shape());
    }
    return &n.grad;
  }

  /// Gradient of `v`; zeros if nothing flowed into it.
  BasicTensor<T> grad(Var<T> v) const {
    const Node& n = node(v);
    if (n.grad.shape() == n.value.shape() && n.grad.size() == n.value.size()) return n.grad;
    return BasicTensor<T>(n.value.shape());
  }

  /// Seeds d(root)/d(root) = 1 for a single-element root and replays the tape.
  void backward(Var<T> root) {
    if (root.size() != 1) {
      throw DimensionError("backward seed requires a single-element root, got " +
                           shape_string(root.shape()));
    }
    BasicTensor<T> seed(root.shape(), T{1});
    backward(root, seed);
  }

  void backward(Var<T> root, const BasicTensor<T>& seed) {
    if (seed.shape() != root.shape()) {
      throw DimensionError("backward seed shape " + shape_string(seed.shape()) +
                           " does not match root " + shape_string(root.shape()));
    }
    BasicTensor<T>* g = grad_slot(root);
    if (g == nullptr) return;
    for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += seed[i];
    for (std::int64_t id = root.id(); id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (!n.backward || n.grad.size() != n.value.size()) continue;
      n.backward(*this, n.grad);
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    BasicTensor<T> value;
    BasicTensor<T> grad;
    Backward backward;
    bool requires_grad = false;
    std::string op;
  };

  Node& node(Var<T> v) { return nodes_.at(v.id()); }
  const Node& node(Var<T> v) const { return nodes_.at(v.id()); }

  std::deque<Node> nodes_;
};

template <typename T>
const BasicTensor<T>& Var<T>::value() const {
  return tape_->value(*this);
}

}  // namespace p2lhap
