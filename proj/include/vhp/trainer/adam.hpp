#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vhp/diffcore/tensor.hpp"

namespace vhp::trainer {

using diffcore::Tensor;

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

/// Moments per parameter tensor. Each tensor keeps its own step count so that
/// parameters frozen for a while start with a fresh bias correction.
struct AdamState {
  AdamConfig cfg;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::vector<std::uint64_t> steps;
};

AdamState make_adam(std::span<Tensor* const> params, const AdamConfig& cfg);

/// Bias-corrected Adam update of params[i] with grads[i] for every i where
/// `active` is empty or active[i] is true. Throws ShapeError on mismatched
/// shapes and NonFiniteError on a NaN/Inf gradient (before touching anything).
void adam_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads, AdamState& state,
               std::span<const bool> active = {});

}  // namespace vhp::trainer
