#include "vhp/cli/cli.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "vhp/error.hpp"
#include "vhp/evalmetrics/metrics.hpp"
#include "vhp/latentgraph/graph.hpp"
#include "vhp/pendulum/pendulum.hpp"
#include "vhp/trainer/config_json.hpp"
#include "vhp/util/atomic_file.hpp"

namespace vhp::cli {

using nlohmann::json;

namespace {

diffcore::NetworkSpec fc_relu(std::size_t width, std::size_t depth) {
  return {std::vector<std::size_t>(depth, width), diffcore::Activation::relu, false};
}

std::size_t get_size(const json& v, const std::string& path) {
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) throw ConfigError(path + " must be a non-negative integer");
  return v.get<std::size_t>();
}

}  // namespace

RunConfig preset_config(std::string_view name) {
  RunConfig c;
  c.preset = std::string(name);
  if (name == "none") return c;
  if (name != "pendulum" && name != "cmu") throw ConfigError("unknown preset '" + std::string(name) + "'");
  const bool pendulum = name == "pendulum";
  c.model.dim_x = pendulum ? 256 : 50;
  c.model.dim_z = 2;
  c.model.dim_zeta = 2;
  c.model.iw_samples = pendulum ? 16 : 32;
  c.model.outer = fc_relu(256, 4);
  c.model.inner = fc_relu(256, 4);
  c.model.likelihood = stochastic::Likelihood::gaussian;
  c.model.decoder_std = 0.02;
  c.train.schedule.algorithm = schedule::Algorithm::rewo;
  c.train.schedule.kappa = 0.02;
  c.train.schedule.nu = pendulum ? 5.0 : 1.0;
  c.train.schedule.tau = 3.0;
  c.train.schedule.alpha = 0.99;
  c.train.schedule.beta0 = 1e-3;
  c.train.adam.lr = pendulum ? 1e-3 : 1e-4;
  c.train.batch_size = 128;
  c.train.epochs = pendulum ? 140 : 100;
  c.graph.nodes = pendulum ? 1000 : 2530;
  c.graph.k = pendulum ? 18 : 15;
  c.eval.samples = 5000;
  return c;
}

RunConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text, nullptr, true, false);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c = preset_config("none");
  if (j.contains("preset")) {
    if (!j["preset"].is_string()) throw ConfigError("preset must be a string");
    c = preset_config(j["preset"].get<std::string>());
  }
  json train = json::object();
  for (const auto& [key, v] : j.items()) {
    if (key == "preset") continue;
    if (key == "seed" || key == "objective" || key == "schedule" || key == "optimizer") {
      train[key] = v;
    } else if (key == "model") {
      trainer::merge(v, c.model, "model");
    } else if (key == "data") {
      if (!v.is_string()) throw ConfigError("data must be a path string");
      c.data = v.get<std::string>();
    } else if (key == "graph") {
      if (!v.is_object()) throw ConfigError("graph must be an object");
      for (const auto& [k2, v2] : v.items()) {
        if (k2 == "nodes") {
          c.graph.nodes = get_size(v2, "graph.nodes");
        } else if (k2 == "k") {
          c.graph.k = get_size(v2, "graph.k");
        } else {
          throw ConfigError("unknown config key 'graph." + k2 + "'");
        }
      }
      if (c.graph.k < 1 || c.graph.nodes <= c.graph.k) throw ConfigError("graph needs k >= 1 and nodes > k");
    } else if (key == "eval") {
      if (!v.is_object()) throw ConfigError("eval must be an object");
      for (const auto& [k2, v2] : v.items()) {
        if (k2 == "samples") {
          c.eval.samples = get_size(v2, "eval.samples");
          if (c.eval.samples < 1) throw ConfigError("eval.samples must be >= 1");
        } else if (k2 == "active_threshold") {
          if (!v2.is_number() || v2.get<double>() < 0.0) throw ConfigError("eval.active_threshold must be >= 0");
          c.eval.active_threshold = v2.get<double>();
        } else {
          throw ConfigError("unknown config key 'eval." + k2 + "'");
        }
      }
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  trainer::merge(train, c.train, "");
  return c;
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, [&](std::ostream& o) { o << text; });
}

std::size_t frame_side(std::size_t dim_x) {
  const auto s = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(dim_x))));
  return s * s == dim_x ? s : 0;
}

struct Options {
  std::string config, data, out, log, ckpt, resume, angles, images, frames, input;
  std::size_t n = 15000;
  std::uint64_t seed = 0;
  std::size_t samples = 0;
  double threshold = -1.0;
  std::size_t nodes = 0;
  std::size_t k = 0;
  std::size_t from = 0;
  std::size_t to = 0;
  std::size_t limit = 0;
  std::optional<std::uint64_t> max_steps;
  std::size_t progress = 100;
};

int run_gen(const Options& o, std::ostream& out) {
  const pendulum::Dataset d = pendulum::generate(o.n, o.seed);
  pendulum::save_tensor(d.images, o.out);
  const auto ap = o.angles.empty() ? pendulum::angles_path(o.out) : std::filesystem::path(o.angles);
  pendulum::save_angles(d.angles, ap);
  out << "wrote " << o.n << " images to " << o.out << " and angles to " << ap.string() << '\n';
  return 0;
}

diffcore::Tensor load_data(const Options& o, const RunConfig* cfg) {
  std::string path = o.data;
  if (path.empty() && cfg) path = cfg->data;
  if (path.empty()) throw ConfigError("no dataset given (use --data)");
  diffcore::Tensor t = pendulum::load_tensor(path);
  if (t.rank() != 2) throw FormatError("dataset must be a rank-2 tensor, got " + diffcore::shape_string(t.shape()));
  if (o.limit > 0 && o.limit < t.rows()) {
    std::vector<std::size_t> idx(o.limit);
    for (std::size_t i = 0; i < o.limit; ++i) idx[i] = i;
    t = diffcore::gather_rows(t, idx);
  }
  return t;
}

int run_train(const Options& o, std::ostream& out) {
  if (o.resume.empty() && o.config.empty()) throw ConfigError("train needs --config (or --resume)");
  RunConfig cfg;
  if (!o.config.empty()) cfg = parse_config(o.config);
  const diffcore::Tensor data = load_data(o, &cfg);
  trainer::Checkpoint run = [&] {
    if (!o.resume.empty()) return trainer::load_checkpoint(o.resume);
    cfg.model.dim_x = data.cols();
    return trainer::start_run(cfg.model, cfg.train);
  }();
  if (o.max_steps) run.train.max_steps = *o.max_steps;

  std::ostringstream log;
  log << trainer::kLogHeader << '\n';
  if (!o.resume.empty() && !o.log.empty()) {
    // Keep the rows logged before the checkpoint so the file stays one continuous trace.
    std::ifstream prev(o.log);
    std::string line;
    if (std::getline(prev, line) && line == trainer::kLogHeader) {
      while (std::getline(prev, line)) {
        if (!line.empty() && std::stoull(line.substr(0, line.find(','))) < run.progress.step) log << line << '\n';
      }
    }
  }
  trainer::train(run, data, [&](const trainer::LogRow& r) {
    log << trainer::format_log_row(r) << '\n';
    if (o.progress > 0 && r.step % o.progress == 0) {
      out << "step " << r.step << " epoch " << r.epoch << " beta " << fmt(r.beta) << " c_hat " << fmt(r.c_hat) << " "
          << (r.initial_phase ? "initial" : "main") << std::endl;
    }
  });
  trainer::save_checkpoint(run, o.out);
  if (!o.log.empty()) write_text(o.log, log.str());
  out << "saved checkpoint to " << o.out << " at step " << run.progress.step << '\n';
  return 0;
}

int run_eval(const Options& o, std::ostream& out) {
  const trainer::Checkpoint run = trainer::load_checkpoint(o.ckpt);
  const diffcore::Tensor data = load_data(o, nullptr);
  const std::size_t s = o.samples > 0 ? o.samples : 5000;
  const evalmetrics::EvalReport rep = evalmetrics::rate_distortion(run.model, data, s, o.seed);
  std::ostringstream csv;
  evalmetrics::write_report_csv(rep, csv);
  if (!o.out.empty()) write_text(o.out, csv.str());
  out << csv.str();
  return 0;
}

int run_active(const Options& o, std::ostream& out) {
  const trainer::Checkpoint run = trainer::load_checkpoint(o.ckpt);
  const diffcore::Tensor data = load_data(o, nullptr);
  const double th = o.threshold >= 0.0 ? o.threshold : evalmetrics::kActiveThreshold;
  const evalmetrics::ActiveUnitsReport rep = evalmetrics::active_units(run.model, data, th, o.seed);
  std::ostringstream csv;
  evalmetrics::write_active_units_csv(rep, csv);
  if (!o.out.empty()) write_text(o.out, csv.str());
  out << csv.str() << "active," << rep.active << '\n';
  return 0;
}

int run_regress(const Options& o, std::ostream& out) {
  const trainer::Checkpoint run = trainer::load_checkpoint(o.ckpt);
  const diffcore::Tensor data = load_data(o, nullptr);
  const auto ap = o.angles.empty() ? pendulum::angles_path(o.data) : std::filesystem::path(o.angles);
  std::vector<double> angles = pendulum::load_angles(ap);
  if (angles.size() < data.rows()) throw FormatError("angle file has fewer rows than the dataset");
  angles.resize(data.rows());
  const evalmetrics::AngleFit fit = evalmetrics::angle_regression(run.model, data, angles);
  std::ostringstream csv;
  csv << "metric,value\nmean_abs_error," << fmt(fit.error) << "\ncentre_x," << fmt(fit.centre_x) << "\ncentre_y,"
      << fmt(fit.centre_y) << "\norientation," << fit.orientation << "\noffset," << fmt(fit.offset) << '\n';
  if (!o.out.empty()) write_text(o.out, csv.str());
  out << csv.str();
  return 0;
}

int run_interpolate(const Options& o, std::ostream& out) {
  const trainer::Checkpoint run = trainer::load_checkpoint(o.ckpt);
  const stochastic::VhpModel& model = run.model;
  const std::size_t nodes = o.nodes > 0 ? o.nodes : 1000;
  const std::size_t k = o.k > 0 ? o.k : 18;
  latentgraph::LatentGraph g = latentgraph::build_graph(model, nodes, k, o.seed);
  std::size_t a = o.from;
  std::size_t b = o.to;
  if (!o.data.empty()) {
    const diffcore::Tensor data = load_data(o, nullptr);
    if (o.from >= data.rows() || o.to >= data.rows()) throw DomainError("--from/--to exceed the dataset size");
    std::tie(a, b) = latentgraph::insert_queries(g, model, data.row(o.from), data.row(o.to));
  }
  const latentgraph::PathResult path = latentgraph::shortest_path(g, a, b);
  const diffcore::Tensor frames = latentgraph::decode_path(model, path);
  write_file_atomic(o.out, [&](std::ostream& os) { latentgraph::write_path_csv(path, os); });
  if (!o.images.empty()) {
    const std::size_t side = frame_side(model.config().dim_x);
    const std::size_t h = side > 0 ? side : 1;
    const std::size_t w = side > 0 ? side : model.config().dim_x;
    write_file_atomic(o.images, [&](std::ostream& os) { latentgraph::write_pgm_strip(frames, h, w, os); });
  }
  if (!o.frames.empty()) pendulum::save_tensor(frames, o.frames);
  out << "path " << path.nodes.size() << " nodes, length " << fmt(path.length) << '\n';
  if (path.nodes.size() >= 3) out << "smoothness," << fmt(latentgraph::smoothness_factor(frames).aggregate) << '\n';
  return 0;
}

int run_smoothness(const Options& o, std::ostream& out) {
  const diffcore::Tensor seq = pendulum::load_tensor(o.input);
  if (seq.rank() != 2) throw FormatError("smoothness input must be a [T x D] tensor");
  const latentgraph::Smoothness s = latentgraph::smoothness_factor(seq);
  std::ostringstream csv;
  csv << "feature,rms\n";
  for (std::size_t d = 0; d < s.per_feature.size(); ++d) csv << d << ',' << fmt(s.per_feature[d]) << '\n';
  csv << "aggregate," << fmt(s.aggregate) << '\n';
  if (!o.out.empty()) write_text(o.out, csv.str());
  out << "aggregate," << fmt(s.aggregate) << '\n';
  return 0;
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hierarchical-prior VAE training and evaluation"};
  app.require_subcommand(1, 1);
  Options o;

  auto* gen = app.add_subcommand("gen-pendulum", "Render a pendulum dataset");
  gen->add_option("--n", o.n, "Number of images")->check(CLI::PositiveNumber);
  gen->add_option("--seed", o.seed, "Random seed");
  gen->add_option("--out", o.out, "Output tensor file")->required();
  gen->add_option("--angles", o.angles, "Angle CSV (default: <out stem>.angles.csv)");

  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--config", o.config, "JSON run config");
  train->add_option("--data", o.data, "Training tensor file");
  train->add_option("--out", o.out, "Checkpoint to write")->required();
  train->add_option("--log", o.log, "Metric CSV to write");
  train->add_option("--resume", o.resume, "Continue from this checkpoint");
  train->add_option("--max-steps", o.max_steps, "Stop after this many total steps (0 = all epochs)");
  train->add_option("--progress", o.progress, "Print a line every N steps (0 = quiet)");

  auto* eval = app.add_subcommand("eval", "Test log-likelihood, rate and distortion");
  eval->add_option("--ckpt", o.ckpt)->required();
  eval->add_option("--data", o.data)->required();
  eval->add_option("--samples", o.samples, "Importance samples per datum (default 5000)");
  eval->add_option("--limit", o.limit, "Use only the first N rows");
  eval->add_option("--seed", o.seed);
  eval->add_option("--out", o.out, "Report CSV");

  auto* active = app.add_subcommand("active-units", "Per-dimension KL of the second latent layer");
  active->add_option("--ckpt", o.ckpt)->required();
  active->add_option("--data", o.data)->required();
  active->add_option("--threshold", o.threshold, "Activity threshold in nats (default 0.01)");
  active->add_option("--limit", o.limit);
  active->add_option("--seed", o.seed);
  active->add_option("--out", o.out, "Per-dimension CSV");

  auto* regress = app.add_subcommand("regress-angle", "Circular regression of pendulum angles on 2-d latents");
  regress->add_option("--ckpt", o.ckpt)->required();
  regress->add_option("--data", o.data)->required();
  regress->add_option("--angles", o.angles, "Angle CSV (default: sibling of --data)");
  regress->add_option("--limit", o.limit);
  regress->add_option("--out", o.out, "Report CSV");

  auto* interp = app.add_subcommand("interpolate", "Shortest path through a prior-sampled latent graph");
  interp->add_option("--ckpt", o.ckpt)->required();
  interp->add_option("--nodes", o.nodes, "Graph nodes (default 1000)");
  interp->add_option("--k", o.k, "Neighbours per node (default 18)");
  interp->add_option("--from", o.from, "Start: dataset row with --data, else graph node")->required();
  interp->add_option("--to", o.to, "End: dataset row with --data, else graph node")->required();
  interp->add_option("--data", o.data, "Dataset whose rows are encoded and inserted as endpoints");
  interp->add_option("--seed", o.seed);
  interp->add_option("--out", o.out, "Path CSV")->required();
  interp->add_option("--images", o.images, "PGM strip of decoded frames");
  interp->add_option("--frames", o.frames, "Decoded frames as a tensor file");

  auto* smooth = app.add_subcommand("smoothness", "Smoothness factor of a [T x D] sequence");
  smooth->add_option("--input", o.input, "Tensor file of frames")->required();
  smooth->add_option("--out", o.out, "Per-feature CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*gen) return run_gen(o, out);
    if (*train) return run_train(o, out);
    if (*eval) return run_eval(o, out);
    if (*active) return run_active(o, out);
    if (*regress) return run_regress(o, out);
    if (*interp) return run_interpolate(o, out);
    if (*smooth) return run_smoothness(o, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace vhp::cli
