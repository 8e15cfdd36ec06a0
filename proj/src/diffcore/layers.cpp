#include "vhp/diffcore/layers.hpp"

#include <cmath>

#include "vhp/diffcore/ops.hpp"
#include "vhp/error.hpp"

namespace vhp::diffcore {

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "identity" || name == "linear") return Activation::identity;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu:
      return "relu";
    case Activation::tanh:
      return "tanh";
    case Activation::sigmoid:
      return "sigmoid";
    case Activation::identity:
      return "identity";
  }
  return "identity";
}

Var activate(Activation a, Var x) {
  switch (a) {
    case Activation::relu:
      return relu(x);
    case Activation::tanh:
      return tanh(x);
    case Activation::sigmoid:
      return sigmoid(x);
    case Activation::identity:
      return x;
  }
  return x;
}

DenseLayer make_dense(std::size_t in, std::size_t out, Activation activation, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  DenseLayer layer{Tensor(Shape{out, in}), Tensor(Shape{out}), activation};
  for (double& w : layer.weight.storage()) w = rng.uniform(-limit, limit);
  return layer;
}

GatedDenseLayer make_gated(std::size_t in, std::size_t out, Activation activation, Rng& rng) {
  DenseLayer value = make_dense(in, out, activation, rng);
  DenseLayer gate = make_dense(in, out, Activation::sigmoid, rng);
  return {std::move(value), std::move(gate)};
}

Mlp::Mlp(std::vector<Layer> layers) : layers_(std::move(layers)) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    std::visit(
        [&](const auto& layer) {
          using T = std::decay_t<decltype(layer)>;
          auto check_dense = [&](const DenseLayer& d) {
            if (d.weight.rank() != 2 || d.bias.size() != d.weight.rows()) {
              throw ShapeError("layer " + std::to_string(i) + ": weight/bias shapes inconsistent");
            }
          };
          if constexpr (std::is_same_v<T, DenseLayer>) {
            check_dense(layer);
          } else {
            check_dense(layer.value);
            check_dense(layer.gate);
            if (layer.value.weight.shape() != layer.gate.weight.shape()) {
              throw ShapeError("layer " + std::to_string(i) + ": gate and value widths differ");
            }
          }
        },
        layers_[i]);
    if (i > 0) {
      const std::size_t prev = std::visit([](const auto& l) { return l.out_dim(); }, layers_[i - 1]);
      const std::size_t cur = std::visit([](const auto& l) { return l.in_dim(); }, layers_[i]);
      if (prev != cur) {
        throw ShapeError("layer " + std::to_string(i) + " expects " + std::to_string(cur) + " inputs but previous layer emits " +
                         std::to_string(prev));
      }
    }
  }
}

Mlp Mlp::build(std::size_t in, const NetworkSpec& spec, std::size_t out, Rng& rng) {
  std::vector<Layer> layers;
  std::size_t width = in;
  for (std::size_t h : spec.hidden) {
    if (spec.gated) {
      layers.emplace_back(make_gated(width, h, spec.activation, rng));
    } else {
      layers.emplace_back(make_dense(width, h, spec.activation, rng));
    }
    width = h;
  }
  layers.emplace_back(make_dense(width, out, Activation::identity, rng));
  return Mlp(std::move(layers));
}

std::vector<Tensor*> Mlp::parameters() {
  std::vector<Tensor*> out;
  for (auto& layer : layers_) {
    if (auto* d = std::get_if<DenseLayer>(&layer)) {
      out.push_back(&d->weight);
      out.push_back(&d->bias);
    } else {
      auto& g = std::get<GatedDenseLayer>(layer);
      out.insert(out.end(), {&g.value.weight, &g.value.bias, &g.gate.weight, &g.gate.bias});
    }
  }
  return out;
}

std::vector<const Tensor*> Mlp::parameters() const {
  std::vector<const Tensor*> out;
  for (Tensor* p : const_cast<Mlp*>(this)->parameters()) out.push_back(p);
  return out;
}

std::size_t Mlp::in_dim() const {
  if (layers_.empty()) return 0;
  return std::visit([](const auto& l) { return l.in_dim(); }, layers_.front());
}

std::size_t Mlp::out_dim() const {
  if (layers_.empty()) return 0;
  return std::visit([](const auto& l) { return l.out_dim(); }, layers_.back());
}

BoundMlp bind(Tape& tape, const Mlp& net, bool trainable) {
  BoundMlp bound{&net, {}};
  for (const Tensor* p : net.parameters()) {
    bound.params.push_back(trainable ? tape.variable(*p) : tape.constant(*p));
  }
  return bound;
}

Var mlp_apply(const BoundMlp& net, Var x) {
  std::size_t p = 0;
  for (const Layer& layer : net.net->layers()) {
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      x = activate(d->activation, linear(x, net.params[p], net.params[p + 1]));
      p += 2;
    } else {
      const auto& g = std::get<GatedDenseLayer>(layer);
      Var value = activate(g.value.activation, linear(x, net.params[p], net.params[p + 1]));
      Var gate = sigmoid(linear(x, net.params[p + 2], net.params[p + 3]));
      x = mul(value, gate);
      p += 4;
    }
  }
  return x;
}

}  // namespace vhp::diffcore
