#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

namespace vhp::schedule {

/// `alt` is the gamma-parameterised update with beta = 1 / (1 + tau * gamma).
enum class Algorithm { none, rewo, geco, warmup, alt };

Algorithm parse_algorithm(std::string_view name);
std::string_view to_string(Algorithm a);

struct ScheduleConfig {
  Algorithm algorithm = Algorithm::rewo;
  double kappa = 0.02;
  double nu = 5.0;
  double tau = 3.0;
  double alpha = 0.99;
  double beta0 = 1e-3;
  std::uint64_t warmup_steps = 10000;  // T for Algorithm::warmup

  double kappa_sq() const { return kappa * kappa; }
  friend bool operator==(const ScheduleConfig&, const ScheduleConfig&) = default;
};

/// Throws ConfigError on out-of-range values.
void validate(const ScheduleConfig& cfg);

// Multiplicative updates can run away under a persistently violated (or slack)
// constraint; beta and lambda are kept inside this band.
inline constexpr double kBetaMin = 1e-10;
inline constexpr double kBetaMax = 1e10;

struct ScheduleState {
  double beta = 1.0;
  double gamma = 1.0;  // only used by Algorithm::alt
  std::optional<double> c_hat;
  bool initial_phase = true;
  std::uint64_t t = 0;

  friend bool operator==(const ScheduleState&, const ScheduleState&) = default;
};

/// Parameters to optimise on this step. `outer` is (theta, phi), `inner` is (Theta, Phi).
struct TrainScope {
  bool outer = true;
  bool inner = true;

  friend bool operator==(const TrainScope&, const TrainScope&) = default;
};

ScheduleState initial_state(const ScheduleConfig& cfg);

/// Returns c_ba on the first call, else (1 - alpha) * c_ba + alpha * c_prev.
double running_cost(std::optional<double> c_prev, double c_ba, double alpha);

/// Heaviside with H(0) = 0.
double heaviside(double delta);

/// (1 - H(delta)) * tanh(tau * (beta - 1)) - H(delta).
double f_beta(double beta, double delta, double tau);

double rewo_beta_step(double beta, double c_hat, const ScheduleConfig& cfg);
double geco_lambda_step(double lambda, double c_hat, const ScheduleConfig& cfg);

struct AltStep {
  double gamma;
  double beta;
};
AltStep alt_beta_step(double gamma, double c_hat, const ScheduleConfig& cfg);

/// min(t / T, 1).
double warmup_beta(std::uint64_t t, std::uint64_t T);

struct Transition {
  ScheduleState state;
  TrainScope scope;
};

/// Two-phase transition: while Ĉ_t stays at or above kappa^2 beta is frozen and only
/// (theta, phi) train; the phase flips permanently once Ĉ_t < kappa^2.
Transition rewo_step(const ScheduleState& s, double c_ba, const ScheduleConfig& cfg);

/// Dispatches on cfg.algorithm; every algorithm other than rewo trains the full model.
Transition advance(const ScheduleState& s, double c_ba, const ScheduleConfig& cfg);

}  // namespace vhp::schedule
