#include "vhp/stochastic/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vhp/diffcore/ops.hpp"
#include "vhp/error.hpp"

namespace vhp::stochastic {

using namespace diffcore;

namespace {

Tensor normal_tensor(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t(Shape{rows, cols});
  for (double& v : t.storage()) v = rng.normal();
  return t;
}

void require_batch(const Tensor& x, const ModelConfig& cfg) {
  if (x.rank() != 2 || x.cols() != cfg.dim_x) {
    throw ShapeError("expected a [batch x " + std::to_string(cfg.dim_x) + "] batch, got " + shape_string(x.shape()));
  }
}

void require_positive_beta(double beta) {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw DomainError("beta must be positive and finite");
}

double mean_value(Var v) { return mean(v).value().item(); }

// Rows [begin, end) of a matrix, copied.
Tensor row_block(const Tensor& t, std::size_t begin, std::size_t end) {
  const std::size_t c = t.cols();
  std::vector<double> data(t.storage().begin() + static_cast<std::ptrdiff_t>(begin * c),
                           t.storage().begin() + static_cast<std::ptrdiff_t>(end * c));
  return Tensor(Shape{end - begin, c}, std::move(data));
}

}  // namespace

Noise draw_noise(const ModelConfig& cfg, std::size_t batch, Rng& rng) {
  Noise n;
  n.eps_z = normal_tensor(batch, cfg.dim_z, rng);
  n.eps_zeta = normal_tensor(batch * cfg.iw_samples, cfg.dim_zeta, rng);
  return n;
}

ReconstructionPass reconstruction_pass(Tape& tape, const VhpModel& model, const Tensor& x, const Tensor& eps_z,
                                       bool trainable) {
  const ModelConfig& cfg = model.config();
  require_batch(x, cfg);
  if (eps_z.shape() != Shape{x.rows(), cfg.dim_z}) throw ShapeError("eps_z does not match the batch");
  ReconstructionPass pass;
  pass.bound = bind_outer(tape, model, trainable);
  Var xv = tape.constant(x);
  pass.posterior = encode(pass.bound, xv);
  pass.z = reparam_sample(pass.posterior, tape.constant(eps_z));
  DecoderOutput dec = decode(pass.bound, pass.z);
  pass.recon = neg(mean(decoder_log_prob(cfg.likelihood, dec, xv)));
  pass.c_hat_batch = mean_value(reconstruction_cost(xv, dec.mean));
  return pass;
}

BoundValue elbo(Tape& tape, const VhpModel& model, const Tensor& x, double beta, const Tensor& eps_z, bool trainable) {
  require_positive_beta(beta);
  ReconstructionPass pass = reconstruction_pass(tape, model, x, eps_z, trainable);
  Var kl = mean(kl_standard_normal(pass.posterior));
  BoundValue out;
  out.total = pass.recon + scale(kl, beta);
  out.kl_term = kl.value().item();
  out.recon_term = pass.recon.value().item();
  out.c_hat_batch = pass.c_hat_batch;
  return out;
}

Var iw_kl_terms(const BoundModel& m, const GaussianVar& posterior, Var z, const Tensor& eps_zeta, std::size_t k) {
  if (k < 1) throw DomainError("K must be at least 1");
  const std::size_t batch = z.rows();
  const std::size_t dim_zeta = m.model->config().dim_zeta;
  if (eps_zeta.shape() != Shape{batch * k, dim_zeta}) {
    throw ShapeError("eps_zeta must be [" + std::to_string(batch * k) + " x " + std::to_string(dim_zeta) + "], got " +
                     shape_string(eps_zeta.shape()));
  }
  Tape& tape = z.tape();
  Var log_q = log_prob(posterior, z);

  GaussianVar proposal = inner_encode(m, z);
  GaussianVar proposal_rep{repeat_rows(proposal.mean, k), repeat_rows(proposal.log_std, k)};
  Var z_rep = repeat_rows(z, k);
  Var zeta = reparam_sample(proposal_rep, tape.constant(eps_zeta));
  GaussianVar conditional = inner_decode(m, zeta);
  Var log_w = log_prob(conditional, z_rep) + standard_normal_log_prob(zeta) - log_prob(proposal_rep, zeta);
  Var log_marginal = add_scalar(logsumexp(reshape(log_w, Shape{batch, k}), 1), -std::log(static_cast<double>(k)));
  return log_q - log_marginal;
}

Var iw_kl_bound(const BoundModel& m, const GaussianVar& posterior, Var z, const Tensor& eps_zeta, std::size_t k) {
  return mean(iw_kl_terms(m, posterior, z, eps_zeta, k));
}

BoundValue complete_vhp_loss(Tape& tape, ReconstructionPass& pass, double beta, bool inner_trainable,
                             const Tensor& eps_zeta) {
  require_positive_beta(beta);
  bind_inner(tape, pass.bound, inner_trainable);
  Var kl = iw_kl_bound(pass.bound, pass.posterior, pass.z, eps_zeta, pass.bound.model->config().iw_samples);
  BoundValue out;
  out.total = pass.recon + scale(kl, beta);
  out.kl_term = kl.value().item();
  out.recon_term = pass.recon.value().item();
  out.c_hat_batch = pass.c_hat_batch;
  return out;
}

BoundValue vhp_loss(Tape& tape, const VhpModel& model, const Tensor& x, double beta, Phase phase, const Noise& noise) {
  ReconstructionPass pass = reconstruction_pass(tape, model, x, noise.eps_z, true);
  return complete_vhp_loss(tape, pass, beta, phase == Phase::main, noise.eps_zeta);
}

PriorSamples prior_sample(const VhpModel& model, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw DomainError("prior_sample needs n >= 1");
  const ModelConfig& cfg = model.config();
  Rng rng(seed);
  PriorSamples out;
  out.zeta = normal_tensor(n, cfg.dim_zeta, rng);
  Tensor eps = normal_tensor(n, cfg.dim_z, rng);
  Tape tape;
  BoundModel m;
  m.model = &model;
  bind_inner(tape, m, false);
  GaussianVar cond = inner_decode(m, tape.constant(out.zeta));
  out.z = reparam_sample(cond, tape.constant(eps)).value();
  return out;
}

std::vector<double> prior_log_marginal(const VhpModel& model, const Tensor& z, std::size_t s, std::uint64_t seed) {
  if (s < 1) throw DomainError("S must be at least 1");
  const ModelConfig& cfg = model.config();
  if (z.rank() != 2 || z.cols() != cfg.dim_z) throw ShapeError("z must be [n x " + std::to_string(cfg.dim_z) + "]");
  Rng rng(seed);
  std::vector<double> out;
  out.reserve(z.rows());
  // Keep each tape at roughly 64k proposal rows.
  const std::size_t chunk = std::max<std::size_t>(1, 65536 / s);
  for (std::size_t begin = 0; begin < z.rows(); begin += chunk) {
    const std::size_t end = std::min(z.rows(), begin + chunk);
    const std::size_t rows = end - begin;
    Tensor eps = normal_tensor(rows * s, cfg.dim_zeta, rng);
    Tape tape;
    BoundModel m;
    m.model = &model;
    bind_inner(tape, m, false);
    Var zb = tape.constant(row_block(z, begin, end));
    GaussianVar proposal = inner_encode(m, zb);
    GaussianVar proposal_rep{repeat_rows(proposal.mean, s), repeat_rows(proposal.log_std, s)};
    Var zeta = reparam_sample(proposal_rep, tape.constant(eps));
    Var log_w = log_prob(inner_decode(m, zeta), repeat_rows(zb, s)) + standard_normal_log_prob(zeta) -
                log_prob(proposal_rep, zeta);
    Var est = add_scalar(logsumexp(reshape(log_w, Shape{rows, s}), 1), -std::log(static_cast<double>(s)));
    const auto& v = est.value().storage();
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

}  // namespace vhp::stochastic
