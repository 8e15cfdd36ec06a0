#include "vhp/stochastic/gaussian.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "vhp/diffcore/ops.hpp"
#include "vhp/error.hpp"

namespace vhp::stochastic {

using namespace diffcore;

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

void require_same_shape(Var a, Var b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": dimension mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

Tensor row_tensor(std::span<const double> v) { return Tensor(Shape{1, v.size()}, {v.begin(), v.end()}); }

GaussianVar constant_gaussian(Tape& tape, const DiagGaussian& g) {
  if (g.mean.size() != g.log_std.size()) throw ShapeError("DiagGaussian: mean and log_std lengths differ");
  return {tape.constant(row_tensor(g.mean)), tape.constant(row_tensor(g.log_std))};
}

}  // namespace

GaussianVar split_gaussian(Var params, std::size_t dim) {
  if (params.cols() != 2 * dim) {
    throw ShapeError("split_gaussian: expected " + std::to_string(2 * dim) + " columns, got " +
                     std::to_string(params.cols()));
  }
  return {slice_cols(params, 0, dim), slice_cols(params, dim, 2 * dim)};
}

Var log_prob(const GaussianVar& g, Var x) {
  require_same_shape(g.mean, x, "log_prob");
  require_same_shape(g.log_std, x, "log_prob");
  Var standardized = (x - g.mean) * exp(-g.log_std);
  Var terms = add_scalar(scale(square(standardized), -0.5) - g.log_std, -kHalfLog2Pi);
  return sum(terms, 1);
}

Var standard_normal_log_prob(Var x) { return sum(add_scalar(scale(square(x), -0.5), -kHalfLog2Pi), 1); }

Var reparam_sample(const GaussianVar& g, Var eps) {
  require_same_shape(g.mean, eps, "reparam_sample");
  return g.mean + exp(g.log_std) * eps;
}

Var kl_divergence(const GaussianVar& q, const GaussianVar& p) {
  require_same_shape(q.mean, p.mean, "kl_divergence");
  require_same_shape(q.log_std, p.log_std, "kl_divergence");
  Var log_ratio = p.log_std - q.log_std;
  Var var_ratio = exp(scale(log_ratio, -2.0));
  Var mean_term = square((q.mean - p.mean) * exp(-p.log_std));
  return sum(add_scalar(log_ratio + scale(var_ratio + mean_term, 0.5), -0.5), 1);
}

Var kl_standard_normal(const GaussianVar& q) {
  Var var_q = exp(scale(q.log_std, 2.0));
  return sum(add_scalar(scale(var_q + square(q.mean), 0.5) - q.log_std, -0.5), 1);
}

Var reconstruction_cost(Var x, Var mean) {
  require_same_shape(x, mean, "reconstruction_cost");
  return scale(sum(square(x - mean), 1), 1.0 / static_cast<double>(x.cols()));
}

Var bernoulli_log_prob(Var logits, Var x) {
  require_same_shape(logits, x, "bernoulli_log_prob");
  return sum(x * logits - softplus(logits), 1);
}

double diag_gaussian_log_prob(const DiagGaussian& g, std::span<const double> x) {
  Tape tape;
  return log_prob(constant_gaussian(tape, g), tape.constant(row_tensor(x))).value().item();
}

std::vector<double> reparam_sample(const DiagGaussian& g, std::span<const double> eps) {
  Tape tape;
  const auto& out = reparam_sample(constant_gaussian(tape, g), tape.constant(row_tensor(eps))).value().storage();
  return std::vector<double>(out.begin(), out.end());
}

double kl_diag_gaussians(const DiagGaussian& q, const DiagGaussian& p) {
  Tape tape;
  return kl_divergence(constant_gaussian(tape, q), constant_gaussian(tape, p)).value().item();
}

double reconstruction_cost(std::span<const double> x, std::span<const double> mean) {
  Tape tape;
  return reconstruction_cost(tape.constant(row_tensor(x)), tape.constant(row_tensor(mean))).value().item();
}

}  // namespace vhp::stochastic
