#include "vhp/trainer/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>

#include "vhp/diffcore/ops.hpp"
#include "vhp/error.hpp"
#include "vhp/stochastic/objectives.hpp"
#include "vhp/trainer/config_json.hpp"
#include "vhp/util/atomic_file.hpp"

namespace vhp::trainer {

using diffcore::Shape;
using diffcore::Tape;
using diffcore::Var;
using nlohmann::json;

namespace {

constexpr std::string_view kMagic = "VHPC1\n";

enum Stream : std::uint64_t { kModelInit = 0, kNoise = 1, kShuffle = 2 };

std::vector<std::size_t> epoch_permutation(std::uint64_t seed, std::uint64_t epoch, std::size_t n) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(derive_seed(derive_seed(seed, kShuffle), epoch));
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Objective parse_objective(std::string_view name) {
  if (name == "vhp") return Objective::vhp;
  if (name == "elbo") return Objective::elbo;
  throw ConfigError("unknown objective '" + std::string(name) + "'");
}

std::string_view to_string(Objective o) { return o == Objective::vhp ? "vhp" : "elbo"; }

void validate(const TrainConfig& cfg) {
  schedule::validate(cfg.schedule);
  if (!(cfg.adam.lr > 0.0)) throw ConfigError("lr must be > 0");
  if (!(cfg.adam.beta1 >= 0.0 && cfg.adam.beta1 < 1.0) || !(cfg.adam.beta2 >= 0.0 && cfg.adam.beta2 < 1.0)) {
    throw ConfigError("Adam beta1/beta2 must lie in [0, 1)");
  }
  if (!(cfg.adam.eps > 0.0)) throw ConfigError("Adam eps must be > 0");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(cfg.grad_clip > 0.0)) throw ConfigError("grad_clip must be > 0");
  if (cfg.inner_steps < 1) throw ConfigError("inner_steps must be >= 1");
}

std::string format_log_row(const LogRow& r) {
  return std::to_string(r.step) + "," + std::to_string(r.epoch) + "," + format_double(r.beta) + "," +
         format_double(r.c_hat) + "," + format_double(r.recon) + "," + format_double(r.kl) + "," +
         (r.initial_phase ? "initial" : "main");
}

Checkpoint start_run(const ModelConfig& model_cfg, const TrainConfig& cfg) {
  validate(cfg);
  VhpModel model(model_cfg, derive_seed(cfg.seed, kModelInit));
  AdamState adam = make_adam(model.parameters(), cfg.adam);
  Progress progress;
  progress.schedule = schedule::initial_state(cfg.schedule);
  return {std::move(model), cfg, std::move(adam), progress};
}

bool finished(const Checkpoint& run) {
  return run.progress.epoch >= run.train.epochs;
}

std::vector<LogRow> train(Checkpoint& run, const diffcore::Tensor& data, const LogSink& sink) {
  const TrainConfig& cfg = run.train;
  VhpModel& model = run.model;
  Progress& pr = run.progress;
  const ModelConfig& mcfg = model.config();
  if (data.rank() != 2 || data.rows() == 0) throw ShapeError("training data must be a non-empty [n x d] matrix");
  if (data.cols() != mcfg.dim_x) {
    throw ShapeError("data has " + std::to_string(data.cols()) + " features but the model expects " +
                     std::to_string(mcfg.dim_x));
  }
  if (cfg.batch_size > data.rows()) throw ConfigError("batch_size exceeds dataset size");
  if (!data.all_finite()) throw NonFiniteError("training data contains NaN/Inf");

  const std::size_t n = data.rows();
  std::vector<Tensor*> params = model.parameters();
  Rng noise_rng = Rng::restore(derive_seed(cfg.seed, kNoise), pr.noise_counter);
  std::vector<LogRow> rows;

  while (pr.epoch < cfg.epochs) {
    const std::vector<std::size_t> perm = epoch_permutation(cfg.seed, pr.epoch, n);
    while (pr.position < n) {
      if (cfg.max_steps != 0 && pr.step >= cfg.max_steps) {
        pr.noise_counter = noise_rng.counter();
        return rows;
      }
      const std::size_t end = std::min(n, static_cast<std::size_t>(pr.position) + cfg.batch_size);
      std::span<const std::size_t> idx(perm.data() + pr.position, end - pr.position);
      const Tensor batch = diffcore::gather_rows(data, idx);
      const stochastic::Noise noise = stochastic::draw_noise(mcfg, idx.size(), noise_rng);

      Tape tape;
      stochastic::ReconstructionPass pass = stochastic::reconstruction_pass(tape, model, batch, noise.eps_z, true);

      pr.pending_c_sum += pass.c_hat_batch;
      ++pr.pending_count;
      if (pr.pending_count >= cfg.inner_steps || pr.step == 0) {
        const double c_ba = pr.pending_c_sum / static_cast<double>(pr.pending_count);
        schedule::Transition tr = schedule::advance(pr.schedule, c_ba, cfg.schedule);
        pr.schedule = tr.state;
        pr.scope = tr.scope;
        pr.pending_c_sum = 0.0;
        pr.pending_count = 0;
      }
      const double beta = pr.schedule.beta;
      const bool inner_active = cfg.objective == Objective::vhp && pr.scope.inner;

      stochastic::BoundValue bv;
      if (cfg.objective == Objective::vhp) {
        bv = stochastic::complete_vhp_loss(tape, pass, beta, inner_active, noise.eps_zeta);
      } else {
        Var kl = diffcore::mean(stochastic::kl_standard_normal(pass.posterior));
        bv.total = pass.recon + diffcore::scale(kl, beta);
        bv.kl_term = kl.value().item();
        bv.recon_term = pass.recon.value().item();
        bv.c_hat_batch = pass.c_hat_batch;
      }
      tape.backward(bv.total);

      std::vector<Var> vars;
      for (const auto* b : {&pass.bound.encoder, &pass.bound.decoder}) vars.insert(vars.end(), b->params.begin(), b->params.end());
      if (inner_active) {
        for (const auto* b : {&pass.bound.inner_encoder, &pass.bound.inner_decoder}) {
          vars.insert(vars.end(), b->params.begin(), b->params.end());
        }
      }
      std::vector<Tensor> grads;
      grads.reserve(params.size());
      double norm_sq = 0.0;
      for (const Var& v : vars) {
        grads.push_back(tape.grad(v));
        for (double g : grads.back().data()) norm_sq += g * g;
      }
      const double norm = std::sqrt(norm_sq);
      if (!std::isfinite(norm)) throw NonFiniteError("non-finite gradient at step " + std::to_string(pr.step));
      if (norm > cfg.grad_clip) {
        const double f = cfg.grad_clip / norm;
        for (Tensor& g : grads) {
          for (double& x : g.data()) x *= f;
        }
      }
      // Parameters outside the scope keep their values; their slot only needs a same-shaped placeholder.
      std::vector<const Tensor*> grad_ptrs(params.size());
      auto active = std::make_unique<bool[]>(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) {
        active[i] = i < grads.size();
        grad_ptrs[i] = active[i] ? &grads[i] : params[i];
      }
      adam_step(params, grad_ptrs, run.adam, std::span<const bool>(active.get(), params.size()));

      LogRow row{pr.step, pr.epoch, beta, pr.schedule.c_hat.value_or(pass.c_hat_batch), bv.recon_term, bv.kl_term,
                 pr.schedule.initial_phase};
      if (!std::isfinite(bv.recon_term)) throw NonFiniteError("reconstruction term is non-finite at step " + std::to_string(pr.step));
      if (!std::isfinite(bv.kl_term)) throw NonFiniteError("KL term is non-finite at step " + std::to_string(pr.step));
      if (sink) sink(row);
      rows.push_back(row);
      ++pr.step;
      pr.position = end;
    }
    ++pr.epoch;
    pr.position = 0;
  }
  pr.noise_counter = noise_rng.counter();
  return rows;
}

// ---- checkpoint -------------------------------------------------------------

namespace {

json state_to_json(const schedule::ScheduleState& s) {
  return {{"beta", s.beta},
          {"gamma", s.gamma},
          {"c_hat", s.c_hat ? json(*s.c_hat) : json(nullptr)},
          {"initial_phase", s.initial_phase},
          {"t", s.t}};
}

schedule::ScheduleState state_from_json(const json& j) {
  schedule::ScheduleState s;
  s.beta = j.at("beta").get<double>();
  s.gamma = j.at("gamma").get<double>();
  if (!j.at("c_hat").is_null()) s.c_hat = j.at("c_hat").get<double>();
  s.initial_phase = j.at("initial_phase").get<bool>();
  s.t = j.at("t").get<std::uint64_t>();
  return s;
}

std::vector<const Tensor*> blob_order(const Checkpoint& run) {
  std::vector<const Tensor*> out = run.model.parameters();
  for (const Tensor& t : run.adam.m) out.push_back(&t);
  for (const Tensor& t : run.adam.v) out.push_back(&t);
  return out;
}

void write_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  out.write(buf, 8);
}

}  // namespace

void write_checkpoint(const Checkpoint& run, std::ostream& out) {
  const Progress& p = run.progress;
  json header;
  header["format"] = 1;
  header["model"] = to_json(run.model.config());
  header["train"] = to_json(run.train);
  header["progress"] = {{"step", p.step},
                        {"epoch", p.epoch},
                        {"position", p.position},
                        {"noise_counter", p.noise_counter},
                        {"schedule", state_to_json(p.schedule)},
                        {"scope_outer", p.scope.outer},
                        {"scope_inner", p.scope.inner},
                        {"pending_c_sum", p.pending_c_sum},
                        {"pending_count", p.pending_count}};
  header["adam_steps"] = run.adam.steps;
  json shapes = json::array();
  for (const Tensor* t : blob_order(run)) shapes.push_back(t->shape());
  header["tensors"] = shapes;
  out.write(kMagic.data(), static_cast<std::streamsize>(kMagic.size()));
  out << header.dump(1) << "\n\n";
  for (const Tensor* t : blob_order(run)) {
    for (double v : t->data()) write_f64(out, v);
  }
}

Checkpoint read_checkpoint(std::istream& in) {
  std::string magic(kMagic.size(), '\0');
  if (!in.read(magic.data(), static_cast<std::streamsize>(magic.size())) || magic != kMagic) {
    throw FormatError("not a checkpoint: bad magic");
  }
  std::string text, line;
  bool terminated = false;
  while (std::getline(in, line)) {
    if (line.empty()) {
      terminated = true;
      break;
    }
    text += line;
    text += '\n';
    if (text.size() > (1u << 24)) throw FormatError("checkpoint header too large");
  }
  if (!terminated) throw FormatError("checkpoint header is truncated");
  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  try {
    if (header.at("format").get<int>() != 1) throw FormatError("unsupported checkpoint version");
    ModelConfig mcfg;
    merge(header.at("model"), mcfg, "model");
    TrainConfig tcfg;
    merge(header.at("train"), tcfg, "train");
    Checkpoint run{VhpModel(mcfg, 0), tcfg, {}, {}};
    run.adam = make_adam(run.model.parameters(), tcfg.adam);
    run.adam.steps = header.at("adam_steps").get<std::vector<std::uint64_t>>();
    if (run.adam.steps.size() != run.adam.m.size()) throw FormatError("checkpoint optimiser state does not match model");
    const json& p = header.at("progress");
    run.progress.step = p.at("step").get<std::uint64_t>();
    run.progress.epoch = p.at("epoch").get<std::uint64_t>();
    run.progress.position = p.at("position").get<std::uint64_t>();
    run.progress.noise_counter = p.at("noise_counter").get<std::uint64_t>();
    run.progress.schedule = state_from_json(p.at("schedule"));
    run.progress.scope.outer = p.at("scope_outer").get<bool>();
    run.progress.scope.inner = p.at("scope_inner").get<bool>();
    run.progress.pending_c_sum = p.at("pending_c_sum").get<double>();
    run.progress.pending_count = p.at("pending_count").get<std::uint64_t>();

    std::vector<const Tensor*> order = blob_order(run);
    const json& shapes = header.at("tensors");
    if (shapes.size() != order.size()) throw FormatError("checkpoint tensor count does not match the architecture");
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (shapes[i].get<Shape>() != order[i]->shape()) {
        throw FormatError("checkpoint tensor " + std::to_string(i) + " has an unexpected shape");
      }
      Tensor* t = const_cast<Tensor*>(order[i]);
      for (double& v : t->data()) {
        unsigned char buf[8];
        if (!in.read(reinterpret_cast<char*>(buf), 8)) throw FormatError("checkpoint payload is truncated");
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(buf[b]) << (8 * b);
        v = std::bit_cast<double>(bits);
      }
      if (!t->all_finite()) throw FormatError("checkpoint tensor " + std::to_string(i) + " holds NaN/Inf");
    }
    if (in.peek() != std::char_traits<char>::eof()) throw FormatError("checkpoint has trailing bytes");
    return run;
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint header is malformed: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint header is malformed: ") + e.what());
  } catch (const ShapeError& e) {
    throw FormatError(std::string("checkpoint header is malformed: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& run, const std::filesystem::path& path) {
  write_file_atomic(path, [&](std::ostream& out) { write_checkpoint(run, out); });
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path.string() + "'");
  return read_checkpoint(in);
}

}  // namespace vhp::trainer
