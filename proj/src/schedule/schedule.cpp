#include "vhp/schedule/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vhp/error.hpp"

namespace vhp::schedule {

Algorithm parse_algorithm(std::string_view name) {
  if (name == "none") return Algorithm::none;
  if (name == "rewo") return Algorithm::rewo;
  if (name == "geco") return Algorithm::geco;
  if (name == "warmup") return Algorithm::warmup;
  if (name == "alt") return Algorithm::alt;
  throw ConfigError("unknown schedule algorithm '" + std::string(name) + "'");
}

std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::none:
      return "none";
    case Algorithm::rewo:
      return "rewo";
    case Algorithm::geco:
      return "geco";
    case Algorithm::warmup:
      return "warmup";
    case Algorithm::alt:
      return "alt";
  }
  return "none";
}

void validate(const ScheduleConfig& cfg) {
  if (!(cfg.kappa > 0.0)) throw ConfigError("kappa must be > 0");
  if (!(cfg.nu > 0.0)) throw ConfigError("nu must be > 0");
  if (!(cfg.tau > 0.0)) throw ConfigError("tau must be > 0");
  if (!(cfg.alpha >= 0.0 && cfg.alpha < 1.0)) throw ConfigError("alpha must lie in [0, 1)");
  if (!(cfg.beta0 > 0.0) || !std::isfinite(cfg.beta0)) throw ConfigError("beta0 must be > 0");
  if (cfg.algorithm == Algorithm::warmup && cfg.warmup_steps < 1) throw ConfigError("warmup_steps must be >= 1");
}

namespace {

double clamp_band(double v) { return std::clamp(v, kBetaMin, kBetaMax); }

}  // namespace

ScheduleState initial_state(const ScheduleConfig& cfg) {
  ScheduleState s;
  switch (cfg.algorithm) {
    case Algorithm::warmup:
      s.beta = 0.0;
      break;
    case Algorithm::alt:
      // gamma chosen so the starting beta equals beta0
      s.gamma = cfg.beta0 < 1.0 ? (1.0 / cfg.beta0 - 1.0) / cfg.tau : 1e-12;
      s.beta = 1.0 / (1.0 + cfg.tau * s.gamma);
      break;
    default:
      s.beta = cfg.beta0;
  }
  return s;
}

double running_cost(std::optional<double> c_prev, double c_ba, double alpha) {
  if (!c_prev) return c_ba;
  return (1.0 - alpha) * c_ba + alpha * *c_prev;
}

double heaviside(double delta) { return delta > 0.0 ? 1.0 : 0.0; }

double f_beta(double beta, double delta, double tau) {
  const double h = heaviside(delta);
  return (1.0 - h) * std::tanh(tau * (beta - 1.0)) - h;
}

double rewo_beta_step(double beta, double c_hat, const ScheduleConfig& cfg) {
  const double delta = c_hat - cfg.kappa_sq();
  return clamp_band(beta * std::exp(cfg.nu * f_beta(beta, delta, cfg.tau) * delta));
}

double geco_lambda_step(double lambda, double c_hat, const ScheduleConfig& cfg) {
  return clamp_band(lambda * std::exp(cfg.nu * (c_hat - cfg.kappa_sq())));
}

AltStep alt_beta_step(double gamma, double c_hat, const ScheduleConfig& cfg) {
  const double g = std::clamp(gamma * std::exp(cfg.nu * (c_hat - cfg.kappa_sq())), kBetaMin, kBetaMax);
  return {g, 1.0 / (1.0 + cfg.tau * g)};
}

double warmup_beta(std::uint64_t t, std::uint64_t T) {
  if (T < 1) throw DomainError("warm-up horizon must be >= 1");
  return std::min(static_cast<double>(t) / static_cast<double>(T), 1.0);
}

Transition rewo_step(const ScheduleState& s, double c_ba, const ScheduleConfig& cfg) {
  Transition out{s, {}};
  ScheduleState& n = out.state;
  n.c_hat = running_cost(s.c_hat, c_ba, cfg.alpha);
  if (n.initial_phase && *n.c_hat < cfg.kappa_sq()) n.initial_phase = false;
  if (n.initial_phase) {
    out.scope = {true, false};
  } else {
    n.beta = rewo_beta_step(s.beta, *n.c_hat, cfg);
    out.scope = {true, true};
  }
  ++n.t;
  return out;
}

Transition advance(const ScheduleState& s, double c_ba, const ScheduleConfig& cfg) {
  if (cfg.algorithm == Algorithm::rewo) return rewo_step(s, c_ba, cfg);
  Transition out{s, {true, true}};
  ScheduleState& n = out.state;
  n.c_hat = running_cost(s.c_hat, c_ba, cfg.alpha);
  n.initial_phase = false;
  switch (cfg.algorithm) {
    case Algorithm::geco:
      n.beta = 1.0 / geco_lambda_step(1.0 / s.beta, *n.c_hat, cfg);
      break;
    case Algorithm::alt: {
      AltStep a = alt_beta_step(s.gamma, *n.c_hat, cfg);
      n.gamma = a.gamma;
      n.beta = a.beta;
      break;
    }
    case Algorithm::warmup:
      n.beta = warmup_beta(s.t + 1, cfg.warmup_steps);
      break;
    default:
      break;
  }
  ++n.t;
  return out;
}

}  // namespace vhp::schedule
