// End-to-end acceptance run: one PASS/FAIL line per criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "oracles.hpp"
#include "suites.hpp"
#include "vhp/cli/cli.hpp"
#include "vhp/error.hpp"
#include "vhp/evalmetrics/metrics.hpp"
#include "vhp/latentgraph/graph.hpp"
#include "vhp/pendulum/pendulum.hpp"
#include "vhp/schedule/schedule.hpp"
#include "vhp/trainer/trainer.hpp"

namespace fs = std::filesystem;
using namespace vhp;
using diffcore::Tensor;
using suite::Outcome;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr std::size_t kPendulumImages = 15000;
constexpr std::uint64_t kDataSeed = 1;
constexpr std::uint64_t kSegmentSteps = 2000;
constexpr double kTrainBudgetSeconds = 45.0 * 60.0;

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

struct Cli {
  int code = 0;
  std::string out;
  std::string err;
};

Cli cli_run(std::vector<std::string> args) {
  args.insert(args.begin(), "vhp");
  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Cli r;
  r.code = cli::dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

void cli_must(const std::vector<std::string>& args) {
  const Cli r = cli_run(args);
  if (r.code != 0) throw Error("vhp " + args.front() + " failed: " + r.err);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

// ---- pendulum runs shared by criteria 1, 2, 5, 6, 7 --------------------------------

struct PendulumRun {
  std::string name;
  fs::path ckpt;
  fs::path log;
  double train_seconds = 0.0;
  double angle_error = 0.0;
  std::optional<trainer::Checkpoint> model;
};

struct Workspace {
  fs::path dir;
  fs::path data;
  std::optional<Tensor> images;
  std::vector<double> angles;
  std::optional<PendulumRun> rewo;
  std::optional<PendulumRun> geco;
};

void ensure_data(Workspace& ws) {
  if (ws.images) return;
  ws.data = ws.dir / "pendulum.vhpt";
  cli_must({"gen-pendulum", "--n", std::to_string(kPendulumImages), "--seed", std::to_string(kDataSeed), "--out",
            ws.data.string()});
  ws.images = pendulum::load_tensor(ws.data);
  ws.angles = pendulum::load_angles(pendulum::angles_path(ws.data));
}

bool same_run(const trainer::Checkpoint& ck, const cli::RunConfig& want) {
  trainer::TrainConfig a = ck.train, b = want.train;
  a.max_steps = b.max_steps = 0;
  return a == b && ck.model.config() == want.model;
}

// Trains to completion in resumable segments; a finished checkpoint from an identical config is reused.
PendulumRun train_pendulum(Workspace& ws, const std::string& name, const std::string& config_text) {
  ensure_data(ws);
  PendulumRun run;
  run.name = name;
  run.ckpt = ws.dir / (name + ".vhpc");
  run.log = ws.dir / (name + "_log.csv");
  const fs::path cfg_path = ws.dir / (name + ".json");
  const fs::path seconds_path = ws.dir / (name + ".seconds");
  write_text(cfg_path, config_text);
  cli::RunConfig want = cli::parse_config(cfg_path);
  want.model.dim_x = ws.images->cols();

  if (fs::exists(run.ckpt)) {
    bool keep = false;
    try {
      keep = same_run(trainer::load_checkpoint(run.ckpt), want);
    } catch (const std::exception&) {
    }
    if (!keep) {
      fs::remove(run.ckpt);
      fs::remove(run.log);
      fs::remove(seconds_path);
    }
  }
  if (fs::exists(seconds_path)) std::ifstream(seconds_path) >> run.train_seconds;

  const std::uint64_t per_epoch = (ws.images->rows() + want.train.batch_size - 1) / want.train.batch_size;
  const std::uint64_t total = want.train.max_steps > 0 ? want.train.max_steps : per_epoch * want.train.epochs;
  for (;;) {
    std::uint64_t at = 0;
    if (fs::exists(run.ckpt)) {
      const trainer::Checkpoint ck = trainer::load_checkpoint(run.ckpt);
      if (trainer::finished(ck) || ck.progress.step >= total) break;
      at = ck.progress.step;
    }
    const std::uint64_t stop = std::min(total, at + kSegmentSteps);
    std::vector<std::string> args{"train", "--data", ws.data.string(), "--out", run.ckpt.string(), "--log",
                                  run.log.string(), "--max-steps", std::to_string(stop)};
    if (fs::exists(run.ckpt)) {
      args.insert(args.end(), {"--resume", run.ckpt.string()});
    } else {
      args.insert(args.end(), {"--config", cfg_path.string()});
    }
    const auto t0 = std::chrono::steady_clock::now();
    cli_must(args);
    run.train_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_text(seconds_path, fmt(run.train_seconds, 10));
    std::cerr << "  [" << name << "] step " << stop << "/" << total << " after " << fmt(run.train_seconds, 5) << " s"
              << std::endl;
  }
  run.model = trainer::load_checkpoint(run.ckpt);

  const Cli r = cli_run({"regress-angle", "--ckpt", run.ckpt.string(), "--data", ws.data.string(), "--out",
                         (ws.dir / (name + "_angle.csv")).string()});
  if (r.code != 0) throw Error("regress-angle failed: " + r.err);
  const auto pos = r.out.find("mean_abs_error,");
  if (pos == std::string::npos) throw Error("regress-angle printed no error line");
  run.angle_error = std::stod(r.out.substr(pos + 15));
  return run;
}

std::string preset_json(const std::string& algorithm) {
  return R"({"preset": "pendulum", "seed": 1, "schedule": {"algorithm": ")" + algorithm + R"("}})";
}

PendulumRun& rewo_run(Workspace& ws) {
  if (!ws.rewo) ws.rewo = train_pendulum(ws, "rewo", preset_json("rewo"));
  return *ws.rewo;
}

PendulumRun& geco_run(Workspace& ws) {
  if (!ws.geco) ws.geco = train_pendulum(ws, "geco", preset_json("geco"));
  return *ws.geco;
}

std::vector<trainer::LogRow> read_log(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  std::vector<trainer::LogRow> rows;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 7) throw FormatError("bad log line: " + line);
    rows.push_back({std::stoull(f[0]), std::stoull(f[1]), std::stod(f[2]), std::stod(f[3]), std::stod(f[4]),
                    std::stod(f[5]), f[6] == "initial"});
  }
  return rows;
}

// ---- criteria ------------------------------------------------------------------------

Outcome criterion1(Workspace& ws) {
  const PendulumRun& rewo = rewo_run(ws);
  const PendulumRun& geco = geco_run(ws);
  Outcome o;
  const bool accurate = rewo.angle_error <= 0.15;
  const bool ordered = geco.angle_error > rewo.angle_error;
  const bool in_budget = rewo.train_seconds <= kTrainBudgetSeconds;
  o.pass = accurate && ordered && in_budget;
  o.detail = "REWO angle error " + fmt(rewo.angle_error) + " rad (<= 0.15: " + (accurate ? "yes" : "no") +
             "), GECO " + fmt(geco.angle_error) + " rad (worse: " + (ordered ? "yes" : "no") + "), REWO training " +
             fmt(rewo.train_seconds / 60.0, 3) + " min (budget 45), GECO training " +
             fmt(geco.train_seconds / 60.0, 3) + " min";
  return o;
}

Outcome criterion2(Workspace& ws) {
  Outcome o;
  std::ostringstream d;
  double worst = 0.0;
  for (const suite::HandValue& h : suite::schedule_hand_values()) worst = std::max(worst, std::abs(h.got - h.expected));
  const bool hand = worst <= 1e-12;
  d << "hand values max diff " << worst << (hand ? "" : " FAILED");

  schedule::ScheduleConfig cfg;
  bool fixed = true;
  for (double delta : {0.0, -1e-9, -0.5 * cfg.kappa_sq(), -cfg.kappa_sq()}) {
    fixed = fixed && schedule::rewo_beta_step(1.0, cfg.kappa_sq() + delta, cfg) == 1.0;
  }
  d << "; fixed point " << (fixed ? "ok" : "FAILED");

  const Outcome freeze = suite::initial_phase_freeze();
  d << "; initial-phase freeze " << (freeze.pass ? "ok" : "FAILED (" + freeze.detail + ")");

  const Outcome trace = suite::beta_trace_shape(read_log(rewo_run(ws).log));
  d << "; pendulum beta trace: " << trace.detail;

  o.pass = hand && fixed && freeze.pass && trace.pass;
  o.detail = d.str();
  return o;
}

Outcome criterion3() {
  const Outcome a = suite::iw_bound_vs_closed_form(0.02);
  const Outcome b = suite::iw_bound_monotone_in_k();
  const Outcome c = suite::test_loglik_vs_closed_form(0.01);
  return {a.pass && b.pass && c.pass,
          "(a) " + a.detail + "; (b) " + b.detail + "; (c) " + c.detail};
}

Outcome criterion4() { return suite::gradient_suite(100, 1e-4); }

Outcome graph_oracles() {
  Outcome o;
  std::size_t checked = 0, mismatches = 0, no_path = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(5000 + seed);
    const std::size_t n = 30 + std::uniform_int_distribution<std::size_t>(0, 70)(rng);
    const std::size_t k = 1 + std::uniform_int_distribution<std::size_t>(0, 5)(rng);
    Tensor pts = oracle::random_matrix(n, 2 + seed % 3, rng);
    for (std::size_t i = 0; i < n; ++i) {
      if (rng.uniform() < 0.3) pts(i, 0) += 10.0;
    }
    const latentgraph::LatentGraph g = latentgraph::build_graph(pts, k);
    for (int q = 0; q < 5; ++q) {
      const std::size_t a = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
      const std::size_t b = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
      const double want = oracle::dijkstra(g, a, b);
      ++checked;
      try {
        if (latentgraph::shortest_path(g, a, b).length != want) ++mismatches;
      } catch (const NoPathError&) {
        ++no_path;
        if (!std::isinf(want)) ++mismatches;
      }
    }
  }
  const Tensor sq({4, 2}, {0, 0, 1, 0, 0, 1, 1, 1});
  const latentgraph::PathResult p = latentgraph::shortest_path(latentgraph::build_graph(sq, 2), 0, 3);
  const bool square = p.length == 2.0 && p.nodes == std::vector<std::size_t>{0, 1, 3};
  o.pass = mismatches == 0 && square;
  o.detail = "A* vs Dijkstra: " + std::to_string(mismatches) + " mismatches over " + std::to_string(checked) +
             " queries on 100 graphs (" + std::to_string(no_path) + " disconnected); square example " +
             (square ? "length 2 via node 1" : "WRONG");
  return o;
}

Outcome criterion5(Workspace& ws) {
  Outcome o = graph_oracles();
  const PendulumRun& run = rewo_run(ws);
  const stochastic::VhpModel& model = run.model->model;
  const evalmetrics::AngleFit fit = evalmetrics::angle_regression(model, *ws.images, ws.angles);
  const cli::RunConfig preset = cli::preset_config("pendulum");
  latentgraph::LatentGraph g = latentgraph::build_graph(model, preset.graph.nodes, preset.graph.k, 0);
  const std::vector<double> start = pendulum::render(0.0), end = pendulum::render(kPi);
  const auto [a, b] = latentgraph::insert_queries(g, model, start, end);
  const latentgraph::PathResult path = latentgraph::shortest_path(g, a, b);
  const Tensor frames = latentgraph::decode_path(model, path);
  const Tensor z = latentgraph::encode_means(model, frames);
  double worst = 0.0;
  std::vector<double> regressed;
  for (std::size_t i = 0; i < z.rows(); ++i) regressed.push_back(evalmetrics::predict_angle(fit, z.row(i)));
  for (std::size_t i = 1; i < regressed.size(); ++i) {
    worst = std::max(worst, std::abs(evalmetrics::wrap_pi(regressed[i] - regressed[i - 1])));
  }
  const bool smooth = worst < 0.5;
  o.pass = o.pass && smooth;
  o.detail += "; pendulum 0 -> pi: " + std::to_string(path.nodes.size()) + " frames, regressed " +
              fmt(regressed.front(), 3) + " -> " + fmt(regressed.back(), 3) + " rad, largest step " + fmt(worst, 3) +
              " rad (< 0.5: " + (smooth ? "yes" : "no") + ")";
  return o;
}

Outcome criterion6(Workspace& ws) {
  Outcome o;
  const double flat = latentgraph::smoothness_factor(Tensor({5, 2}, {0, 1, 1, 3, 2, 5, 3, 7, 4, 9})).aggregate;
  const double bump = latentgraph::smoothness_factor(Tensor({3, 1}, {0, 1, 0})).aggregate;
  const bool hand = flat == 0.0 && bump == 2.0;

  const stochastic::VhpModel& model = rewo_run(ws).model->model;
  const cli::RunConfig preset = cli::preset_config("pendulum");
  // Endpoints drawn uniformly from a held-out set.
  const pendulum::Dataset test = pendulum::generate(1000, 2);
  double graph_sum = 0.0, line_sum = 0.0;
  std::size_t used = 0, skipped = 0;
  for (std::uint64_t gi = 0; gi < 10; ++gi) {
    const latentgraph::LatentGraph base = latentgraph::build_graph(model, preset.graph.nodes, preset.graph.k, 100 + gi);
    Rng rng(200 + gi);
    for (int q = 0; q < 100; ++q) {
      const std::size_t i = std::uniform_int_distribution<std::size_t>(0, test.angles.size() - 1)(rng);
      const std::size_t j = std::uniform_int_distribution<std::size_t>(0, test.angles.size() - 1)(rng);
      latentgraph::LatentGraph g = base;
      const auto [a, b] = latentgraph::insert_queries(g, model, test.images.row(i), test.images.row(j));
      latentgraph::PathResult path;
      try {
        path = latentgraph::shortest_path(g, a, b);
      } catch (const NoPathError&) {
        ++skipped;
        continue;
      }
      const std::size_t t = path.nodes.size();
      if (t < 3) {
        ++skipped;
        continue;
      }
      const Tensor line = latentgraph::straight_line(g.point(a), g.point(b), t);
      graph_sum += latentgraph::smoothness_factor(latentgraph::decode_path(model, path)).aggregate;
      line_sum += latentgraph::smoothness_factor(latentgraph::decode_latents(model, line)).aggregate;
      ++used;
    }
  }
  const double graph_mean = used ? graph_sum / static_cast<double>(used) : 0.0;
  const double line_mean = used ? line_sum / static_cast<double>(used) : 0.0;
  const bool ordered = used > 0 && graph_mean <= line_mean;
  o.pass = hand && ordered;
  o.detail = std::string("hand cases ") + (hand ? "exact" : "WRONG (" + fmt(flat) + ", " + fmt(bump) + ")") +
             "; pendulum over 10 graphs x 100 pairs (" + std::to_string(used) + " used, " + std::to_string(skipped) +
             " with < 3 frames or no path): graph path " + fmt(graph_mean, 5) + " vs straight line " +
             fmt(line_mean, 5);
  return o;
}

Outcome criterion7(Workspace& ws) {
  const PendulumRun& run = rewo_run(ws);
  const fs::path csv = ws.dir / "rewo_active_units.csv";
  const Cli r = cli_run({"active-units", "--ckpt", run.ckpt.string(), "--data", ws.data.string(), "--out", csv.string()});
  if (r.code != 0) return {false, "active-units failed: " + r.err};
  std::ifstream in(csv);
  std::string line;
  std::getline(in, line);
  std::vector<double> kl;
  std::ostringstream values;
  while (std::getline(in, line)) {
    const double v = std::stod(line.substr(line.rfind(',') + 1));
    kl.push_back(v);
    values << (kl.size() > 1 ? ", " : "") << "dim " << line.substr(line.find(',') + 1, line.rfind(',') - line.find(',') - 1)
           << " = " << fmt(v);
  }
  const bool sorted = std::is_sorted(kl.rbegin(), kl.rend());
  const auto active = std::count_if(kl.begin(), kl.end(), [](double v) { return v > 0.01; });
  return {sorted && active >= 1,
          std::to_string(active) + " of " + std::to_string(kl.size()) + " zeta dims above 0.01 nats (" + values.str() +
              "); CSV sorted descending: " + (sorted ? "yes" : "no")};
}

Outcome criterion8(Workspace& ws) {
  std::vector<std::string> failures;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  };

  stochastic::ModelConfig mc;
  mc.dim_x = 6;
  mc.outer = {{12}, diffcore::Activation::relu, false};
  mc.inner = {{8}, diffcore::Activation::tanh, false};
  mc.iw_samples = 4;
  mc.decoder_std = 0.1;
  trainer::TrainConfig tc;
  tc.schedule.kappa = 0.3;
  tc.batch_size = 16;
  tc.epochs = 5;
  tc.seed = 4;
  tc.adam.lr = 1e-3;
  Rng rng(12);
  const Tensor data = oracle::random_matrix(70, 6, rng, 0.0, 1.0);
  auto bytes = [](const trainer::Checkpoint& c) {
    std::ostringstream s;
    trainer::write_checkpoint(c, s);
    return s.str();
  };

  trainer::Checkpoint whole = trainer::start_run(mc, tc);
  const auto all_rows = trainer::train(whole, data);
  trainer::Checkpoint part = trainer::start_run(mc, tc);
  part.train.max_steps = 9;
  auto rows = trainer::train(part, data);
  const fs::path ck = ws.dir / "persist.vhpc";
  trainer::save_checkpoint(part, ck);
  trainer::Checkpoint resumed = trainer::load_checkpoint(ck);
  expect(bytes(resumed) == bytes(part), "save -> load changed the checkpoint");
  resumed.train.max_steps = 0;
  const auto rest = trainer::train(resumed, data);
  rows.insert(rows.end(), rest.begin(), rest.end());
  expect(rows == all_rows, "resumed log differs from the uninterrupted run");
  resumed.train.max_steps = whole.train.max_steps;
  expect(bytes(resumed) == bytes(whole), "resumed final state differs from the uninterrupted run");

  for (int trial = 0; trial < 20; ++trial) {
    const Tensor t = oracle::random_matrix(1 + trial, 1 + 3 * trial, rng, -1e3, 1e3);
    Tensor f32 = t;
    for (double& v : f32.storage()) v = static_cast<double>(static_cast<float>(v));
    const fs::path p = ws.dir / "roundtrip.vhpt";
    pendulum::save_tensor(t, p);
    expect(pendulum::load_tensor(p) == f32, "tensor round trip " + std::to_string(trial));
  }

  auto format_error = [](const std::function<void()>& f) {
    try {
      f();
    } catch (const FormatError&) {
      return true;
    } catch (...) {
      return false;
    }
    return false;
  };
  const std::string good_ck = slurp(ck);
  const std::vector<std::pair<std::string, std::string>> bad_cks = {
      {"magic", "X" + good_ck.substr(1)},
      {"truncated", good_ck.substr(0, good_ck.size() - 5)},
      {"header only", good_ck.substr(0, good_ck.find("\n\n") + 2)},
      {"trailing", good_ck + "!"}};
  for (const auto& [what, content] : bad_cks) {
    write_text(ws.dir / "bad.vhpc", content);
    expect(format_error([&] { trainer::load_checkpoint(ws.dir / "bad.vhpc"); }), "checkpoint " + what);
  }
  pendulum::save_tensor(data, ws.dir / "data.vhpt");
  const std::string good_t = slurp(ws.dir / "data.vhpt");
  const std::vector<std::pair<std::string, std::string>> bad_ts = {
      {"magic", "VHPX" + good_t.substr(4)},
      {"version", good_t.substr(0, 4) + std::string(1, '\x09') + good_t.substr(5)},
      {"truncated", good_t.substr(0, good_t.size() - 2)},
      {"trailing", good_t + "xx"}};
  for (const auto& [what, content] : bad_ts) {
    write_text(ws.dir / "bad.vhpt", content);
    expect(format_error([&] { pendulum::load_tensor(ws.dir / "bad.vhpt"); }), "tensor file " + what);
  }
  // A corrupted dataset must stop the CLI before anything is trained or written.
  write_text(ws.dir / "bad.vhpt", good_t.substr(0, good_t.size() - 2));
  write_text(ws.dir / "tiny.json", R"({"model": {"outer": {"hidden": [4]}, "inner": {"hidden": [4]}}})");
  fs::remove(ws.dir / "never.vhpc");
  const Cli r = cli_run({"train", "--config", (ws.dir / "tiny.json").string(), "--data", (ws.dir / "bad.vhpt").string(),
                         "--out", (ws.dir / "never.vhpc").string()});
  expect(r.code == 1 && !fs::exists(ws.dir / "never.vhpc"), "CLI trained on a corrupted dataset");

  Outcome o;
  o.pass = failures.empty();
  std::ostringstream d;
  d << "resume after 9 of " << all_rows.size() << " steps bit-exact, 20 tensor round trips, 8 corrupted files";
  for (const std::string& f : failures) d << "; FAILED " << f;
  o.detail = d.str();
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("Acceptance run");
  std::string workdir = "acceptance_work";
  std::vector<int> only;
  app.add_option("--workdir", workdir, "Scratch directory (reused checkpoints live here)");
  app.add_option("--only", only, "Run only these criteria");
  CLI11_PARSE(app, argc, argv);

  Workspace ws;
  ws.dir = workdir;
  fs::create_directories(ws.dir);

  const std::vector<std::function<Outcome()>> criteria = {
      [&] { return criterion1(ws); }, [&] { return criterion2(ws); }, [] { return criterion3(); },
      [] { return criterion4(); },    [&] { return criterion5(ws); }, [&] { return criterion6(ws); },
      [&] { return criterion7(ws); }, [&] { return criterion8(ws); }};

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i]();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << " - " << o.detail << " [" << fmt(secs, 3)
              << " s]" << std::endl;
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
