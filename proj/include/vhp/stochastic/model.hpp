#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "vhp/diffcore/layers.hpp"
#include "vhp/stochastic/gaussian.hpp"

namespace vhp::stochastic {

using diffcore::Mlp;
using diffcore::NetworkSpec;
using diffcore::Tape;

enum class Likelihood { gaussian, bernoulli };

Likelihood parse_likelihood(std::string_view name);
std::string_view to_string(Likelihood l);

/// phi, theta, Phi, Theta in that order.
enum class ParamGroup { encoder, decoder, inner_encoder, inner_decoder };

inline constexpr double kDecoderLogStdMin = -7.0;
inline constexpr double kDecoderLogStdMax = 2.0;

struct ModelConfig {
  std::size_t dim_x = 0;
  std::size_t dim_z = 2;
  std::size_t dim_zeta = 2;
  std::size_t iw_samples = 16;
  NetworkSpec outer;
  NetworkSpec inner;
  Likelihood likelihood = Likelihood::gaussian;
  /// Gaussian decoders: > 0 fixes a shared std for every pixel; 0 learns a
  /// per-pixel log-std head (clamped to [kDecoderLogStdMin, kDecoderLogStdMax]).
  double decoder_std = 0.0;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Gaussian heads emit 2*d columns (mean then log-std) unless the decoder std is fixed,
/// in which case the decoder emits dim_x means; a Bernoulli decoder emits dim_x logits.
std::size_t decoder_width(const ModelConfig& cfg);

class VhpModel {
 public:
  /// Fresh Glorot-initialised networks.
  VhpModel(ModelConfig cfg, std::uint64_t seed);
  /// Explicit networks; throws ShapeError when their widths disagree with `cfg`.
  VhpModel(ModelConfig cfg, Mlp encoder, Mlp decoder, Mlp inner_encoder, Mlp inner_decoder);

  const ModelConfig& config() const { return cfg_; }
  void set_iw_samples(std::size_t k);

  const Mlp& net(ParamGroup g) const;
  Mlp& net(ParamGroup g);

  /// All parameter tensors: encoder, decoder, inner encoder, inner decoder.
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;

 private:
  void validate() const;

  ModelConfig cfg_;
  Mlp encoder_;
  Mlp decoder_;
  Mlp inner_encoder_;
  Mlp inner_decoder_;
};

/// A model with parameters on a tape. Inner networks may be bound later than the outer ones.
struct BoundModel {
  const VhpModel* model = nullptr;
  diffcore::BoundMlp encoder;
  diffcore::BoundMlp decoder;
  diffcore::BoundMlp inner_encoder;
  diffcore::BoundMlp inner_decoder;
  bool inner_bound = false;
};

BoundModel bind_outer(Tape& tape, const VhpModel& model, bool trainable);
void bind_inner(Tape& tape, BoundModel& bound, bool trainable);
BoundModel bind(Tape& tape, const VhpModel& model, bool outer_trainable, bool inner_trainable);

/// Decoder head. For Bernoulli likelihoods `mean` is sigmoid(logits) and `log_std` is unset.
struct DecoderOutput {
  Var mean;
  Var log_std;
  Var logits;
};

GaussianVar encode(const BoundModel& m, Var x);
DecoderOutput decode(const BoundModel& m, Var z);
GaussianVar inner_encode(const BoundModel& m, Var z);
GaussianVar inner_decode(const BoundModel& m, Var zeta);

/// Row-wise log p_theta(x | z), [batch x 1].
Var decoder_log_prob(Likelihood l, const DecoderOutput& out, Var x);

}  // namespace vhp::stochastic
