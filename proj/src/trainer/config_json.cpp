#include "vhp/trainer/config_json.hpp"

#include <cmath>
#include <limits>

#include "vhp/error.hpp"

namespace vhp::trainer {

using nlohmann::json;

namespace {

std::string key_path(const std::string& where, const std::string& key) {
  return where.empty() ? key : where + "." + key;
}

void require_object(const json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError((where.empty() ? std::string("config") : where) + " must be an object");
}

double get_double(const json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path + " must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ConfigError(path + " must be finite");
  return d;
}

std::uint64_t get_count(const json& v, const std::string& path) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer()) {
    if (v.get<std::int64_t>() < 0) throw ConfigError(path + " must be non-negative");
    return static_cast<std::uint64_t>(v.get<std::int64_t>());
  }
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (d >= 0.0 && d == std::floor(d) && d < 9.0e15) return static_cast<std::uint64_t>(d);
  }
  throw ConfigError(path + " must be a non-negative integer");
}

std::string get_string(const json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError(path + " must be a string");
  return v.get<std::string>();
}

bool get_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) throw ConfigError(path + " must be true or false");
  return v.get<bool>();
}

[[noreturn]] void unknown_key(const std::string& where, const std::string& key) {
  throw ConfigError("unknown config key '" + key_path(where, key) + "'");
}

}  // namespace

json to_json(const diffcore::NetworkSpec& spec) {
  return {{"hidden", spec.hidden}, {"activation", std::string(diffcore::to_string(spec.activation))}, {"gated", spec.gated}};
}

json to_json(const ModelConfig& cfg) {
  return {{"dim_x", cfg.dim_x},
          {"dim_z", cfg.dim_z},
          {"dim_zeta", cfg.dim_zeta},
          {"K", cfg.iw_samples},
          {"likelihood", std::string(stochastic::to_string(cfg.likelihood))},
          {"decoder_std", cfg.decoder_std},
          {"outer", to_json(cfg.outer)},
          {"inner", to_json(cfg.inner)}};
}

json to_json(const schedule::ScheduleConfig& cfg) {
  return {{"algorithm", std::string(schedule::to_string(cfg.algorithm))},
          {"kappa", cfg.kappa},
          {"nu", cfg.nu},
          {"tau", cfg.tau},
          {"alpha", cfg.alpha},
          {"beta0", cfg.beta0},
          {"warmup_steps", cfg.warmup_steps}};
}

json to_json(const TrainConfig& cfg) {
  return {{"seed", cfg.seed},
          {"objective", std::string(to_string(cfg.objective))},
          {"schedule", to_json(cfg.schedule)},
          {"optimizer",
           {{"lr", cfg.adam.lr},
            {"beta1", cfg.adam.beta1},
            {"beta2", cfg.adam.beta2},
            {"eps", cfg.adam.eps},
            {"batch_size", cfg.batch_size},
            {"epochs", cfg.epochs},
            {"grad_clip", cfg.grad_clip},
            {"inner_steps", cfg.inner_steps},
            {"max_steps", cfg.max_steps}}}};
}

void merge(const json& j, diffcore::NetworkSpec& spec, const std::string& where) {
  require_object(j, where);
  for (const auto& [key, v] : j.items()) {
    const std::string p = key_path(where, key);
    if (key == "hidden") {
      if (!v.is_array()) throw ConfigError(p + " must be an array of layer widths");
      spec.hidden.clear();
      for (const auto& w : v) {
        const std::uint64_t width = get_count(w, p);
        if (width == 0) throw ConfigError(p + " widths must be positive");
        spec.hidden.push_back(width);
      }
    } else if (key == "activation") {
      spec.activation = diffcore::parse_activation(get_string(v, p));
    } else if (key == "gated") {
      spec.gated = get_bool(v, p);
    } else {
      unknown_key(where, key);
    }
  }
}

void merge(const json& j, ModelConfig& cfg, const std::string& where) {
  require_object(j, where);
  for (const auto& [key, v] : j.items()) {
    const std::string p = key_path(where, key);
    if (key == "dim_x") {
      cfg.dim_x = get_count(v, p);
    } else if (key == "dim_z") {
      cfg.dim_z = get_count(v, p);
    } else if (key == "dim_zeta") {
      cfg.dim_zeta = get_count(v, p);
    } else if (key == "K") {
      cfg.iw_samples = get_count(v, p);
    } else if (key == "likelihood") {
      cfg.likelihood = stochastic::parse_likelihood(get_string(v, p));
    } else if (key == "decoder_std") {
      cfg.decoder_std = get_double(v, p);
      if (cfg.decoder_std < 0.0) throw ConfigError(p + " must be >= 0");
    } else if (key == "outer") {
      merge(v, cfg.outer, p);
    } else if (key == "inner") {
      merge(v, cfg.inner, p);
    } else {
      unknown_key(where, key);
    }
  }
  if (cfg.dim_z == 0 || cfg.dim_zeta == 0) throw ConfigError(key_path(where, "dim_z/dim_zeta") + " must be positive");
  if (cfg.iw_samples < 1) throw ConfigError(key_path(where, "K") + " must be at least 1");
}

void merge(const json& j, schedule::ScheduleConfig& cfg, const std::string& where) {
  require_object(j, where);
  for (const auto& [key, v] : j.items()) {
    const std::string p = key_path(where, key);
    if (key == "algorithm") {
      cfg.algorithm = schedule::parse_algorithm(get_string(v, p));
    } else if (key == "kappa") {
      cfg.kappa = get_double(v, p);
    } else if (key == "nu") {
      cfg.nu = get_double(v, p);
    } else if (key == "tau") {
      cfg.tau = get_double(v, p);
    } else if (key == "alpha") {
      cfg.alpha = get_double(v, p);
    } else if (key == "beta0") {
      cfg.beta0 = get_double(v, p);
    } else if (key == "warmup_steps") {
      cfg.warmup_steps = get_count(v, p);
    } else {
      unknown_key(where, key);
    }
  }
  schedule::validate(cfg);
}

void merge(const json& j, TrainConfig& cfg, const std::string& where) {
  require_object(j, where);
  for (const auto& [key, v] : j.items()) {
    const std::string p = key_path(where, key);
    if (key == "seed") {
      cfg.seed = get_count(v, p);
    } else if (key == "objective") {
      cfg.objective = parse_objective(get_string(v, p));
    } else if (key == "schedule") {
      merge(v, cfg.schedule, p);
    } else if (key == "optimizer") {
      require_object(v, p);
      for (const auto& [k2, v2] : v.items()) {
        const std::string p2 = key_path(p, k2);
        if (k2 == "lr") {
          cfg.adam.lr = get_double(v2, p2);
        } else if (k2 == "beta1") {
          cfg.adam.beta1 = get_double(v2, p2);
        } else if (k2 == "beta2") {
          cfg.adam.beta2 = get_double(v2, p2);
        } else if (k2 == "eps") {
          cfg.adam.eps = get_double(v2, p2);
        } else if (k2 == "batch_size") {
          cfg.batch_size = get_count(v2, p2);
        } else if (k2 == "epochs") {
          cfg.epochs = get_count(v2, p2);
        } else if (k2 == "grad_clip") {
          cfg.grad_clip = get_double(v2, p2);
        } else if (k2 == "inner_steps") {
          cfg.inner_steps = get_count(v2, p2);
        } else if (k2 == "max_steps") {
          cfg.max_steps = get_count(v2, p2);
        } else {
          unknown_key(p, k2);
        }
      }
    } else {
      unknown_key(where, key);
    }
  }
  validate(cfg);
}

}  // namespace vhp::trainer
