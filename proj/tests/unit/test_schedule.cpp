#include <cmath>

#include "doctest.h"
#include "suites.hpp"
#include "vhp/error.hpp"
#include "vhp/schedule/schedule.hpp"

using namespace vhp;
using namespace vhp::schedule;

TEST_CASE("hand-computed update values to 1e-12") {
  for (const suite::HandValue& h : suite::schedule_hand_values()) {
    INFO(h.name << ": got " << h.got << ", expected " << h.expected);
    CHECK(std::abs(h.got - h.expected) <= 1e-12);
  }
  ScheduleConfig cfg;
  cfg.nu = 1.0;
  // 0.5 * exp(0.0905148) = 0.547369
  CHECK(rewo_beta_step(0.5, cfg.kappa_sq() - 0.1, cfg) == doctest::Approx(0.547369).epsilon(1e-6));
  CHECK(alt_beta_step(1.0, cfg.kappa_sq() + 0.1, cfg).beta == doctest::Approx(0.231723).epsilon(1e-6));
}

TEST_CASE("Heaviside convention") {
  CHECK(heaviside(0.0) == 0.0);
  CHECK(heaviside(1e-300) == 1.0);
  CHECK(heaviside(-1.0) == 0.0);
}

TEST_CASE("config validation") {
  ScheduleConfig ok;
  CHECK_NOTHROW(validate(ok));
  auto bad = [](auto mutate) {
    ScheduleConfig c;
    mutate(c);
    return c;
  };
  CHECK_THROWS_AS(validate(bad([](ScheduleConfig& c) { c.kappa = 0.0; })), ConfigError);
  CHECK_THROWS_AS(validate(bad([](ScheduleConfig& c) { c.nu = -1.0; })), ConfigError);
  CHECK_THROWS_AS(validate(bad([](ScheduleConfig& c) { c.tau = 0.0; })), ConfigError);
  CHECK_THROWS_AS(validate(bad([](ScheduleConfig& c) { c.alpha = 1.0; })), ConfigError);
  CHECK_THROWS_AS(validate(bad([](ScheduleConfig& c) { c.alpha = -0.1; })), ConfigError);
  CHECK_THROWS_AS(validate(bad([](ScheduleConfig& c) { c.beta0 = 0.0; })), ConfigError);
  CHECK_THROWS_AS(validate(bad([](ScheduleConfig& c) { c.kappa = std::nan(""); })), ConfigError);
  CHECK_NOTHROW(validate(bad([](ScheduleConfig& c) { c.alpha = 0.0; })));
  CHECK(parse_algorithm("geco") == Algorithm::geco);
  CHECK(to_string(Algorithm::alt) == "alt");
  CHECK_THROWS_AS(parse_algorithm("rewoo"), ConfigError);
}

TEST_CASE("beta fixed point at one when the constraint holds") {
  ScheduleConfig cfg;
  for (double delta : {0.0, -1e-6, -0.01, -3.0}) CHECK(rewo_beta_step(1.0, cfg.kappa_sq() + delta, cfg) == 1.0);
}

TEST_CASE("update directions") {
  ScheduleConfig cfg;
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const double beta = rng.uniform(1e-4, 0.999);
    // Costs are mean squared errors, so delta >= -kappa^2.
    const double delta = rng.uniform(-cfg.kappa_sq(), 0.5);
    const double c = cfg.kappa_sq() + delta;
    const double next = rewo_beta_step(beta, c, cfg);
    CHECK(next > 0.0);
    if (delta > 0) CHECK(next < beta);
    if (delta < 0) CHECK(next > beta);
    if (delta < 0) CHECK(next <= 1.0);
    const double lambda = rng.uniform(0.1, 10.0);
    const double lnext = geco_lambda_step(lambda, c, cfg);
    CHECK((lnext > lambda) == (delta > 0));
    const AltStep a = alt_beta_step(rng.uniform(1e-3, 10.0), c, cfg);
    CHECK(a.beta > 0.0);
    CHECK(a.beta < 1.0);
  }
  CHECK(alt_beta_step(1e-14, cfg.kappa_sq(), cfg).beta == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("REWO and GECO agree while the constraint is violated") {
  ScheduleConfig cfg;
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const double lambda = rng.uniform(0.5, 50.0);
    const double c = cfg.kappa_sq() + rng.uniform(1e-4, 0.3);
    CHECK(rewo_beta_step(1.0 / lambda, c, cfg) == doctest::Approx(1.0 / geco_lambda_step(lambda, c, cfg)).epsilon(1e-13));
  }
}

TEST_CASE("beta stays inside the clamp band") {
  ScheduleConfig cfg;
  cfg.nu = 1000.0;
  double beta = 1e-3;
  for (int i = 0; i < 1000; ++i) beta = rewo_beta_step(beta, 10.0, cfg);
  CHECK(beta == kBetaMin);
  double lambda = 1.0;
  for (int i = 0; i < 1000; ++i) lambda = geco_lambda_step(lambda, 10.0, cfg);
  CHECK(lambda == kBetaMax);
}

TEST_CASE("REWO state machine") {
  ScheduleConfig cfg;
  SUBCASE("constraint never met keeps beta frozen and the inner nets out of scope") {
    ScheduleState s = initial_state(cfg);
    Rng rng(1);
    for (int i = 0; i < 300; ++i) {
      Transition t = rewo_step(s, cfg.kappa_sq() + rng.uniform(0.0, 0.05), cfg);
      CHECK(t.state.beta == cfg.beta0);
      CHECK(t.state.initial_phase);
      CHECK(t.scope.outer);
      CHECK_FALSE(t.scope.inner);
      CHECK(t.state.t == s.t + 1);
      s = t.state;
    }
  }
  SUBCASE("first batch below kappa^2 flips immediately") {
    Transition t = rewo_step(initial_state(cfg), 0.5 * cfg.kappa_sq(), cfg);
    CHECK_FALSE(t.state.initial_phase);
    CHECK(t.scope.inner);
    CHECK(*t.state.c_hat == 0.5 * cfg.kappa_sq());
  }
  SUBCASE("the phase flip is permanent") {
    ScheduleState s = initial_state(cfg);
    s = rewo_step(s, 0.0, cfg).state;
    for (int i = 0; i < 100; ++i) {
      s = rewo_step(s, 1.0, cfg).state;
      CHECK_FALSE(s.initial_phase);
    }
  }
  SUBCASE("sustained slack drives beta to one") {
    ScheduleState s = initial_state(cfg);
    for (int i = 0; i < 200000; ++i) s = rewo_step(s, 0.5 * cfg.kappa_sq(), cfg).state;
    CHECK(s.beta >= 1.0 - 1e-3);
    CHECK(s.beta <= 1.0);
  }
  SUBCASE("transitions are pure") {
    ScheduleState s = initial_state(cfg);
    s.c_hat = 0.01;
    CHECK(rewo_step(s, 0.003, cfg).state == rewo_step(s, 0.003, cfg).state);
  }
}

TEST_CASE("flat-then-rise beta trace on a synthetic cost curve") {
  ScheduleConfig cfg;
  ScheduleState s = initial_state(cfg);
  std::vector<trainer::LogRow> rows;
  for (std::uint64_t t = 0; t < 60000; ++t) {
    // Cost decays from 0.05 to well below kappa^2.
    const double c = 0.05 * std::exp(-static_cast<double>(t) / 1500.0) + 1e-4;
    Transition tr = rewo_step(s, c, cfg);
    s = tr.state;
    rows.push_back({t, 0, s.beta, *s.c_hat, 0.0, 0.0, s.initial_phase});
  }
  const suite::Outcome o = suite::beta_trace_shape(rows);
  INFO(o.detail);
  CHECK(o.pass);

  std::vector<trainer::LogRow> never(rows.begin(), rows.begin() + 10);
  for (auto& r : never) r.initial_phase = true;
  CHECK_FALSE(suite::beta_trace_shape(never).pass);
}

TEST_CASE("other algorithms train the full model") {
  ScheduleConfig cfg;
  cfg.algorithm = Algorithm::geco;
  ScheduleState s = initial_state(cfg);
  CHECK(s.beta == cfg.beta0);
  Transition t = advance(s, cfg.kappa_sq() + 0.1, cfg);
  CHECK(t.scope.inner);
  CHECK_FALSE(t.state.initial_phase);
  CHECK(t.state.beta == doctest::Approx(1.0 / geco_lambda_step(1.0 / cfg.beta0, cfg.kappa_sq() + 0.1, cfg)).epsilon(1e-14));

  cfg.algorithm = Algorithm::warmup;
  cfg.warmup_steps = 4;
  s = initial_state(cfg);
  CHECK(s.beta == 0.0);
  std::vector<double> betas;
  for (int i = 0; i < 6; ++i) {
    s = advance(s, 1.0, cfg).state;
    betas.push_back(s.beta);
  }
  CHECK(betas == std::vector<double>{0.25, 0.5, 0.75, 1.0, 1.0, 1.0});
  CHECK_THROWS_AS(warmup_beta(1, 0), DomainError);

  cfg.algorithm = Algorithm::alt;
  s = initial_state(cfg);
  CHECK(s.beta == doctest::Approx(cfg.beta0).epsilon(1e-12));

  cfg.algorithm = Algorithm::none;
  s = initial_state(cfg);
  s.beta = 1.0;
  for (int i = 0; i < 5; ++i) s = advance(s, 0.3, cfg).state;
  CHECK(s.beta == 1.0);
}
