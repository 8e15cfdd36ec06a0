#include "vhp/stochastic/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vhp/diffcore/ops.hpp"
#include "vhp/error.hpp"

namespace vhp::stochastic {

using namespace diffcore;

Likelihood parse_likelihood(std::string_view name) {
  if (name == "gaussian") return Likelihood::gaussian;
  if (name == "bernoulli") return Likelihood::bernoulli;
  throw ConfigError("unknown likelihood '" + std::string(name) + "'");
}

std::string_view to_string(Likelihood l) { return l == Likelihood::gaussian ? "gaussian" : "bernoulli"; }

std::size_t decoder_width(const ModelConfig& cfg) {
  return cfg.likelihood == Likelihood::gaussian && cfg.decoder_std == 0.0 ? 2 * cfg.dim_x : cfg.dim_x;
}

VhpModel::VhpModel(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  if (cfg_.dim_x == 0 || cfg_.dim_z == 0 || cfg_.dim_zeta == 0) throw ConfigError("model dimensions must be positive");
  if (!(cfg_.decoder_std >= 0.0) || !std::isfinite(cfg_.decoder_std)) throw ConfigError("decoder_std must be >= 0");
  Rng rng(seed);
  encoder_ = Mlp::build(cfg_.dim_x, cfg_.outer, 2 * cfg_.dim_z, rng);
  decoder_ = Mlp::build(cfg_.dim_z, cfg_.outer, decoder_width(cfg_), rng);
  inner_encoder_ = Mlp::build(cfg_.dim_z, cfg_.inner, 2 * cfg_.dim_zeta, rng);
  inner_decoder_ = Mlp::build(cfg_.dim_zeta, cfg_.inner, 2 * cfg_.dim_z, rng);
  validate();
}

VhpModel::VhpModel(ModelConfig cfg, Mlp encoder, Mlp decoder, Mlp inner_encoder, Mlp inner_decoder)
    : cfg_(std::move(cfg)),
      encoder_(std::move(encoder)),
      decoder_(std::move(decoder)),
      inner_encoder_(std::move(inner_encoder)),
      inner_decoder_(std::move(inner_decoder)) {
  validate();
}

void VhpModel::validate() const {
  if (cfg_.iw_samples < 1) throw ConfigError("K must be at least 1");
  auto check = [](const Mlp& net, std::size_t in, std::size_t out, const char* name) {
    if (net.layers().empty() || net.in_dim() != in || net.out_dim() != out) {
      throw ShapeError(std::string(name) + " must map " + std::to_string(in) + " -> " + std::to_string(out) + ", got " +
                       std::to_string(net.in_dim()) + " -> " + std::to_string(net.out_dim()));
    }
  };
  check(encoder_, cfg_.dim_x, 2 * cfg_.dim_z, "encoder");
  check(decoder_, cfg_.dim_z, decoder_width(cfg_), "decoder");
  check(inner_encoder_, cfg_.dim_z, 2 * cfg_.dim_zeta, "inner encoder");
  check(inner_decoder_, cfg_.dim_zeta, 2 * cfg_.dim_z, "inner decoder");
}

void VhpModel::set_iw_samples(std::size_t k) {
  if (k < 1) throw ConfigError("K must be at least 1");
  cfg_.iw_samples = k;
}

const Mlp& VhpModel::net(ParamGroup g) const {
  switch (g) {
    case ParamGroup::encoder:
      return encoder_;
    case ParamGroup::decoder:
      return decoder_;
    case ParamGroup::inner_encoder:
      return inner_encoder_;
    case ParamGroup::inner_decoder:
      return inner_decoder_;
  }
  return encoder_;
}

Mlp& VhpModel::net(ParamGroup g) { return const_cast<Mlp&>(static_cast<const VhpModel*>(this)->net(g)); }

std::vector<Tensor*> VhpModel::parameters() {
  std::vector<Tensor*> out;
  for (Mlp* net : {&encoder_, &decoder_, &inner_encoder_, &inner_decoder_}) {
    auto p = net->parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<const Tensor*> VhpModel::parameters() const {
  std::vector<const Tensor*> out;
  for (Tensor* p : const_cast<VhpModel*>(this)->parameters()) out.push_back(p);
  return out;
}

BoundModel bind_outer(Tape& tape, const VhpModel& model, bool trainable) {
  BoundModel m;
  m.model = &model;
  m.encoder = diffcore::bind(tape, model.net(ParamGroup::encoder), trainable);
  m.decoder = diffcore::bind(tape, model.net(ParamGroup::decoder), trainable);
  return m;
}

void bind_inner(Tape& tape, BoundModel& m, bool trainable) {
  m.inner_encoder = diffcore::bind(tape, m.model->net(ParamGroup::inner_encoder), trainable);
  m.inner_decoder = diffcore::bind(tape, m.model->net(ParamGroup::inner_decoder), trainable);
  m.inner_bound = true;
}

BoundModel bind(Tape& tape, const VhpModel& model, bool outer_trainable, bool inner_trainable) {
  BoundModel m = bind_outer(tape, model, outer_trainable);
  bind_inner(tape, m, inner_trainable);
  return m;
}

namespace {

void require_inner(const BoundModel& m) {
  if (!m.inner_bound) throw Error("inner networks are not bound to the tape");
}

}  // namespace

GaussianVar encode(const BoundModel& m, Var x) {
  return split_gaussian(mlp_apply(m.encoder, x), m.model->config().dim_z);
}

DecoderOutput decode(const BoundModel& m, Var z) {
  Var out = mlp_apply(m.decoder, z);
  const ModelConfig& cfg = m.model->config();
  if (cfg.likelihood == Likelihood::bernoulli) return {sigmoid(out), Var{}, out};
  if (cfg.decoder_std > 0.0) {
    const double ls = std::clamp(std::log(cfg.decoder_std), kDecoderLogStdMin, kDecoderLogStdMax);
    return {out, z.tape().constant(Tensor::filled(out.shape(), ls)), Var{}};
  }
  GaussianVar g = split_gaussian(out, cfg.dim_x);
  return {g.mean, clamp(g.log_std, kDecoderLogStdMin, kDecoderLogStdMax), Var{}};
}

GaussianVar inner_encode(const BoundModel& m, Var z) {
  require_inner(m);
  return split_gaussian(mlp_apply(m.inner_encoder, z), m.model->config().dim_zeta);
}

GaussianVar inner_decode(const BoundModel& m, Var zeta) {
  require_inner(m);
  return split_gaussian(mlp_apply(m.inner_decoder, zeta), m.model->config().dim_z);
}

Var decoder_log_prob(Likelihood l, const DecoderOutput& out, Var x) {
  if (l == Likelihood::bernoulli) return bernoulli_log_prob(out.logits, x);
  return log_prob(GaussianVar{out.mean, out.log_std}, x);
}

}  // namespace vhp::stochastic
