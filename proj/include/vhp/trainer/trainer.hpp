#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "vhp/schedule/schedule.hpp"
#include "vhp/stochastic/model.hpp"
#include "vhp/trainer/adam.hpp"

namespace vhp::trainer {

using stochastic::ModelConfig;
using stochastic::VhpModel;

/// vhp: reconstruction + beta * IW bound under the hierarchical prior.
/// elbo: reconstruction + beta * KL against a standard-normal prior.
enum class Objective { vhp, elbo };

Objective parse_objective(std::string_view name);
std::string_view to_string(Objective o);

struct TrainConfig {
  schedule::ScheduleConfig schedule;
  AdamConfig adam;
  Objective objective = Objective::vhp;
  std::size_t batch_size = 128;
  std::uint64_t epochs = 100;
  std::uint64_t seed = 0;
  double grad_clip = 100.0;
  /// Parameter steps between schedule updates (1 = joint single steps).
  std::uint64_t inner_steps = 1;
  /// Stop after this many total steps (0 = run all epochs).
  std::uint64_t max_steps = 0;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

void validate(const TrainConfig& cfg);

struct LogRow {
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  double beta = 0.0;
  double c_hat = 0.0;
  double recon = 0.0;
  double kl = 0.0;
  bool initial_phase = true;

  friend bool operator==(const LogRow&, const LogRow&) = default;
};

inline constexpr const char* kLogHeader = "step,epoch,beta,c_hat,recon,kl,phase";
/// One CSV line (no newline) with round-trippable doubles.
std::string format_log_row(const LogRow& row);

/// Where the next step resumes.
struct Progress {
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  std::uint64_t position = 0;  // index into the epoch's permutation
  std::uint64_t noise_counter = 0;
  schedule::ScheduleState schedule;
  schedule::TrainScope scope{true, false};
  double pending_c_sum = 0.0;
  std::uint64_t pending_count = 0;

  friend bool operator==(const Progress&, const Progress&) = default;
};

/// Everything needed to continue a run bit-identically.
struct Checkpoint {
  VhpModel model;
  TrainConfig train;
  AdamState adam;
  Progress progress;
};

/// Fresh run: model initialised from a seed derived from cfg.seed.
Checkpoint start_run(const ModelConfig& model_cfg, const TrainConfig& cfg);

using LogSink = std::function<void(const LogRow&)>;

/// Continues `run` on `data` ([n x dim_x]) until all epochs are done or
/// max_steps is reached. Returns the rows produced by this call.
std::vector<LogRow> train(Checkpoint& run, const diffcore::Tensor& data, const LogSink& sink = {});

bool finished(const Checkpoint& run);

void save_checkpoint(const Checkpoint& run, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
void write_checkpoint(const Checkpoint& run, std::ostream& out);
Checkpoint read_checkpoint(std::istream& in);

}  // namespace vhp::trainer
