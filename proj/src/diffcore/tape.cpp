#include "vhp/diffcore/tape.hpp"

#include <algorithm>
#include <string>

#include "vhp/error.hpp"

namespace vhp::diffcore {

const Tensor& Var::value() const { return tape_->value(id_); }

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NonFiniteError("constant leaf holds non-finite values");
  nodes_.push_back(Node{std::move(value), {}, false, false, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
  if (!value.all_finite()) throw NonFiniteError("variable leaf holds non-finite values");
  nodes_.push_back(Node{std::move(value), {}, true, true, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string_view op, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  if (!value.all_finite()) {
    throw NonFiniteError("non-finite value produced by " + std::string(op));
  }
  bool needs = false;
  for (const Var& in : inputs) {
    if (&in.tape() != this) throw Error(std::string(op) + ": operand belongs to a different tape");
    needs = needs || nodes_[in.id()].requires_grad;
  }
  Node node{std::move(value), {}, needs, false, false, {}};
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& node = nodes_[id];
  if (!node.has_grad) {
    node.grad = Tensor(node.value.shape());
    node.has_grad = true;
  }
  return node.grad;
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw Error("backward: loss belongs to a different tape");
  if (loss.value().size() != 1) {
    throw ShapeError("backward requires a scalar loss, got shape " + shape_string(loss.shape()));
  }
  for (auto& node : nodes_) {
    node.has_grad = false;
    node.grad = Tensor();
  }
  grad_buffer(loss.id())[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.has_grad || !node.backward) continue;
    // The closure only touches gradients of earlier nodes, so the reference stays valid.
    node.backward(*this, node.value, node.grad);
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].is_variable) grad_buffer(i);
  }
}

const Tensor& Tape::grad(Var v) const {
  const Node& node = nodes_[v.id()];
  if (!node.has_grad) throw Error("no gradient recorded for node " + std::to_string(v.id()));
  return node.grad;
}

}  // namespace vhp::diffcore
