#pragma once

#include <cstddef>
#include <functional>
#include <string_view>
#include <vector>

#include "vhp/diffcore/tensor.hpp"

namespace vhp::diffcore {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Append-only record of primitive ops for reverse-mode differentiation.
///
/// Nodes are stored in creation order, so every op's inputs precede it and a
/// single reverse sweep visits each op once. Nodes that do not depend on any
/// variable carry no backward rule.
class Tape {
 public:
  /// Receives the node's forward value and the gradient of the loss w.r.t. it.
  using BackwardFn = std::function<void(Tape&, const Tensor& out, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient.
  Var constant(Tensor value);
  /// Leaf whose gradient is collected by backward().
  Var variable(Tensor value);

  /// Records an op output. Throws NonFiniteError when `value` holds NaN/Inf.
  /// `backward` is dropped when no input requires a gradient.
  Var record(std::string_view op, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Gradient buffer of a node, zero-initialised on first access.
  Tensor& grad_buffer(std::size_t id);

  /// Reverse sweep from a scalar loss. Every variable ends up with a
  /// gradient (zero when the loss does not depend on it).
  void backward(Var loss);

  /// Gradient of the last backward() loss w.r.t. `v`.
  const Tensor& grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool is_variable = false;
    bool has_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

}  // namespace vhp::diffcore
