#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "vhp/diffcore/tape.hpp"
#include "vhp/util/rng.hpp"

namespace vhp::diffcore {

enum class Activation { relu, tanh, sigmoid, identity };

Activation parse_activation(std::string_view name);
std::string_view to_string(Activation a);

Var activate(Activation a, Var x);

/// Fully-connected layer: act(x * W^T + b) with W of shape [out x in].
struct DenseLayer {
  Tensor weight;
  Tensor bias;
  Activation activation = Activation::identity;

  std::size_t in_dim() const { return weight.cols(); }
  std::size_t out_dim() const { return weight.rows(); }
};

/// act(value(x)) multiplied element-wise by sigmoid(gate(x)).
struct GatedDenseLayer {
  DenseLayer value;
  DenseLayer gate;

  std::size_t in_dim() const { return value.in_dim(); }
  std::size_t out_dim() const { return value.out_dim(); }
};

using Layer = std::variant<DenseLayer, GatedDenseLayer>;

/// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero bias.
DenseLayer make_dense(std::size_t in, std::size_t out, Activation activation, Rng& rng);
GatedDenseLayer make_gated(std::size_t in, std::size_t out, Activation activation, Rng& rng);

/// Hidden-layer description shared by the four conditionals of a model.
struct NetworkSpec {
  std::vector<std::size_t> hidden;
  Activation activation = Activation::relu;
  bool gated = false;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

class Mlp {
 public:
  Mlp() = default;
  /// Throws ShapeError when consecutive layer widths do not chain.
  explicit Mlp(std::vector<Layer> layers);

  /// Hidden layers per `spec` followed by a linear output layer of width `out`.
  static Mlp build(std::size_t in, const NetworkSpec& spec, std::size_t out, Rng& rng);

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  /// Weight/bias tensors in a fixed order: per layer weight then bias,
  /// gated layers contribute value weight, value bias, gate weight, gate bias.
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;

  std::size_t in_dim() const;
  std::size_t out_dim() const;

 private:
  std::vector<Layer> layers_;
};

/// An Mlp whose parameters live on a tape, in Mlp::parameters() order.
struct BoundMlp {
  const Mlp* net = nullptr;
  std::vector<Var> params;
};

/// Places the parameters on `tape`, as variables when `trainable` else as constants.
BoundMlp bind(Tape& tape, const Mlp& net, bool trainable);

/// Sequential application of the layers to a [batch x in] input.
Var mlp_apply(const BoundMlp& net, Var x);

}  // namespace vhp::diffcore
