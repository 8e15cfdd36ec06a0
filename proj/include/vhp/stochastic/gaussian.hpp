#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vhp/diffcore/tape.hpp"

namespace vhp::stochastic {

using diffcore::Tensor;
using diffcore::Var;

/// Diagonal Gaussian with std = exp(log_std).
struct DiagGaussian {
  std::vector<double> mean;
  std::vector<double> log_std;
};

/// Batch of diagonal Gaussians on a tape, one per row of `mean` / `log_std`.
struct GaussianVar {
  Var mean;
  Var log_std;
};

/// Splits [batch x 2d] network output into mean (first d columns) and log-std.
GaussianVar split_gaussian(Var params, std::size_t dim);

/// Row-wise log density, [batch x 1].
Var log_prob(const GaussianVar& g, Var x);
/// Row-wise log N(x; 0, I), [batch x 1].
Var standard_normal_log_prob(Var x);
/// mean + exp(log_std) * eps.
Var reparam_sample(const GaussianVar& g, Var eps);
/// Row-wise closed-form KL(q || p), [batch x 1].
Var kl_divergence(const GaussianVar& q, const GaussianVar& p);
/// Row-wise KL(q || N(0, I)), [batch x 1].
Var kl_standard_normal(const GaussianVar& q);
/// Row-wise mean squared error between data and a decoder mean, [batch x 1].
Var reconstruction_cost(Var x, Var mean);
/// Row-wise Bernoulli log-likelihood of x in [0, 1] under sigmoid(logits), [batch x 1].
Var bernoulli_log_prob(Var logits, Var x);

// Single-vector conveniences. They run through the same tape ops.
double diag_gaussian_log_prob(const DiagGaussian& g, std::span<const double> x);
std::vector<double> reparam_sample(const DiagGaussian& g, std::span<const double> eps);
double kl_diag_gaussians(const DiagGaussian& q, const DiagGaussian& p);
double reconstruction_cost(std::span<const double> x, std::span<const double> mean);

}  // namespace vhp::stochastic
