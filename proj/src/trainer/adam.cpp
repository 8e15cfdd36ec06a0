#include "vhp/trainer/adam.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "vhp/error.hpp"

namespace vhp::trainer {

namespace {

// Moments of parameters whose gradient is exactly zero (dead ReLU units) decay
// geometrically into the subnormal range, where arithmetic is very slow. They are
// far below eps there, so zeroing them does not change any update.
double flush(double x) { return std::abs(x) < std::numeric_limits<double>::min() ? 0.0 : x; }

}  // namespace

AdamState make_adam(std::span<Tensor* const> params, const AdamConfig& cfg) {
  AdamState s;
  s.cfg = cfg;
  for (const Tensor* p : params) {
    s.m.emplace_back(p->shape());
    s.v.emplace_back(p->shape());
    s.steps.push_back(0);
  }
  return s;
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads, AdamState& state,
               std::span<const bool> active) {
  const std::size_t n = params.size();
  if (grads.size() != n || state.m.size() != n || state.v.size() != n || state.steps.size() != n ||
      (!active.empty() && active.size() != n)) {
    throw ShapeError("adam_step: parameter, gradient and state counts differ");
  }
  auto is_active = [&](std::size_t i) { return active.empty() || active[i]; };
  for (std::size_t i = 0; i < n; ++i) {
    if (!is_active(i)) continue;
    if (grads[i]->shape() != params[i]->shape() || state.m[i].shape() != params[i]->shape()) {
      throw ShapeError("adam_step: shape mismatch at parameter " + std::to_string(i));
    }
    if (!grads[i]->all_finite()) throw NonFiniteError("adam_step: non-finite gradient at parameter " + std::to_string(i));
  }
  const AdamConfig& c = state.cfg;
  for (std::size_t i = 0; i < n; ++i) {
    if (!is_active(i)) continue;
    const std::uint64_t t = ++state.steps[i];
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
    auto p = params[i]->data();
    auto g = grads[i]->data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = flush(c.beta1 * m[j] + (1.0 - c.beta1) * g[j]);
      v[j] = flush(c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j]);
      p[j] -= c.lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + c.eps);
    }
  }
}

}  // namespace vhp::trainer
