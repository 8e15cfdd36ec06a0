#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "vhp/stochastic/model.hpp"
#include "vhp/util/rng.hpp"

namespace vhp::stochastic {

/// Standard-normal noise for one batch: eps_z is [batch x dim_z], eps_zeta is
/// [batch*K x dim_zeta] with the K proposals of datum i in rows i*K .. i*K+K-1.
struct Noise {
  Tensor eps_z;
  Tensor eps_zeta;
};

/// Draws eps_z row-major first, then eps_zeta.
Noise draw_noise(const ModelConfig& cfg, std::size_t batch, Rng& rng);

/// Minimisation-form objective for one batch. `total` is on the tape; the rest are plain values.
struct BoundValue {
  Var total;
  double kl_term = 0.0;      // batch mean of the KL (or KL bound) term, unweighted
  double recon_term = 0.0;   // batch mean of -log p_theta(x | z)
  double c_hat_batch = 0.0;  // batch mean of the per-dimension squared error
};

enum class Phase { initial, main };

/// Per-batch mean of -log p_theta(x|z) + beta * KL(q_phi(z|x) || N(0, I)).
BoundValue elbo(Tape& tape, const VhpModel& model, const Tensor& x, double beta, const Tensor& eps_z,
                bool trainable = true);

/// Row-wise importance-weighted estimate of log q_phi(z|x) - log p_Theta(z), [batch x 1].
/// `eps_zeta` holds K rows per row of z.
Var iw_kl_terms(const BoundModel& m, const GaussianVar& posterior, Var z, const Tensor& eps_zeta, std::size_t k);

/// Batch mean of iw_kl_terms, as a scalar node.
Var iw_kl_bound(const BoundModel& m, const GaussianVar& posterior, Var z, const Tensor& eps_zeta, std::size_t k);

/// First half of the hierarchical objective: encoder, reparameterised z and the reconstruction terms.
struct ReconstructionPass {
  BoundModel bound;
  GaussianVar posterior;
  Var z;
  Var recon;  // scalar: batch mean of -log p_theta(x|z)
  double c_hat_batch = 0.0;
};

ReconstructionPass reconstruction_pass(Tape& tape, const VhpModel& model, const Tensor& x, const Tensor& eps_z,
                                       bool trainable = true);

/// Binds the inner networks (trainable only when `inner_trainable`) and adds beta * F.
BoundValue complete_vhp_loss(Tape& tape, ReconstructionPass& pass, double beta, bool inner_trainable,
                             const Tensor& eps_zeta);

/// recon + beta * F with every parameter on the tape. In the initial phase the inner
/// networks enter as constants, so their gradients are exactly zero.
BoundValue vhp_loss(Tape& tape, const VhpModel& model, const Tensor& x, double beta, Phase phase, const Noise& noise);

struct PriorSamples {
  Tensor z;     // [n x dim_z]
  Tensor zeta;  // [n x dim_zeta]
};

/// Ancestral samples zeta ~ N(0, I), z ~ p_Theta(z | zeta).
PriorSamples prior_sample(const VhpModel& model, std::size_t n, std::uint64_t seed);

/// Importance-sampled log p_Theta(z) per row of z with S proposals from q_Phi(zeta | z).
std::vector<double> prior_log_marginal(const VhpModel& model, const Tensor& z, std::size_t s, std::uint64_t seed);

}  // namespace vhp::stochastic
