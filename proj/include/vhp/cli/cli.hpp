#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

#include "vhp/trainer/trainer.hpp"

namespace vhp::cli {

struct GraphConfig {
  std::size_t nodes = 1000;
  std::size_t k = 18;
};

struct EvalConfig {
  std::size_t samples = 5000;
  double active_threshold = 0.01;
};

struct RunConfig {
  std::string preset;
  std::string data;  // optional default for --data
  stochastic::ModelConfig model;
  trainer::TrainConfig train;
  GraphConfig graph;
  EvalConfig eval;
};

/// "pendulum", "cmu" or "none" (library defaults).
RunConfig preset_config(std::string_view name);

/// Strict JSON: the optional "preset" key is applied first, every other key overrides it.
RunConfig parse_config_text(const std::string& text);
RunConfig parse_config(const std::filesystem::path& path);

/// Runs one subcommand. Returns 0 on success, 1 on runtime errors, 2 on usage errors.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace vhp::cli
