#include "vhp/evalmetrics/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <numbers>
#include <numeric>
#include <ostream>
#include <string>
#include <thread>

#include "vhp/diffcore/ops.hpp"
#include "vhp/error.hpp"
#include "vhp/latentgraph/graph.hpp"
#include "vhp/stochastic/objectives.hpp"

namespace vhp::evalmetrics {

using diffcore::Shape;
using diffcore::Tape;
using diffcore::Var;
using namespace stochastic;

namespace {

constexpr std::size_t kRowsPerTape = 4096;

// Streams for seeds derived from the caller's seed; per-datum streams use the datum index.
constexpr std::uint64_t kRateStream = 1ull << 40;
constexpr std::uint64_t kActiveStream = 2ull << 40;

Tensor rows_of(const Tensor& t, std::size_t begin, std::size_t end) {
  const std::size_t c = t.cols();
  return Tensor(Shape{end - begin, c},
                std::vector<double>(t.storage().begin() + static_cast<std::ptrdiff_t>(begin * c),
                                    t.storage().begin() + static_cast<std::ptrdiff_t>(end * c)));
}

void require_data(const VhpModel& model, const Tensor& x) {
  if (x.rank() != 2 || x.rows() == 0 || x.cols() != model.config().dim_x) {
    throw ShapeError("expected a non-empty [n x " + std::to_string(model.config().dim_x) + "] data matrix, got " +
                     diffcore::shape_string(x.shape()));
  }
}

// log p(x|z) + log p(z|zeta) + log p(zeta) - log q(z|x) - log q(zeta|z) for `s` samples of every row of `xs`.
// eps_z / eps_zeta hold the samples datum-major.
std::vector<double> joint_log_weights(const VhpModel& model, const Tensor& xs, const Tensor& eps_z,
                                      const Tensor& eps_zeta, std::size_t s) {
  Tape tape;
  BoundModel m = bind(tape, model, false, false);
  Var x = tape.constant(xs);
  GaussianVar post = encode(m, x);
  GaussianVar post_rep{diffcore::repeat_rows(post.mean, s), diffcore::repeat_rows(post.log_std, s)};
  Var x_rep = diffcore::repeat_rows(x, s);
  Var z = reparam_sample(post_rep, tape.constant(eps_z));
  Var log_px = decoder_log_prob(model.config().likelihood, decode(m, z), x_rep);
  GaussianVar prop = inner_encode(m, z);
  Var zeta = reparam_sample(prop, tape.constant(eps_zeta));
  Var log_w = log_px + log_prob(inner_decode(m, zeta), z) + standard_normal_log_prob(zeta) - log_prob(post_rep, z) -
              log_prob(prop, zeta);
  const auto& v = log_w.value().storage();
  return std::vector<double>(v.begin(), v.end());
}

double log_mean_exp(std::span<const double> v) {
  const double mx = *std::max_element(v.begin(), v.end());
  double acc = 0.0;
  for (double w : v) acc += std::exp(w - mx);
  return mx + std::log(acc) - std::log(static_cast<double>(v.size()));
}

Tensor normal_tensor(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t(Shape{rows, cols});
  for (double& v : t.storage()) v = rng.normal();
  return t;
}

// Runs body(g) for g in [0, groups) on the worker pool; rethrows the first failure.
template <typename F>
void parallel_for(std::size_t groups, F body) {
  const std::size_t workers = std::min(worker_count(), groups);
  if (workers <= 1) {
    for (std::size_t g = 0; g < groups; ++g) body(g);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t g = next++; g < groups; g = next++) {
        try {
          body(g);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = groups;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

std::size_t worker_count() {
  if (const char* env = std::getenv("VHP_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<double> test_loglik_iw(const VhpModel& model, const Tensor& x, std::size_t s, std::uint64_t seed) {
  if (s < 1) throw DomainError("S must be at least 1");
  require_data(model, x);
  const ModelConfig& cfg = model.config();
  const std::size_t n = x.rows();
  const std::size_t per_group = std::max<std::size_t>(1, kRowsPerTape / s);
  const std::size_t groups = (n + per_group - 1) / per_group;
  std::vector<double> out(n);

  parallel_for(groups, [&](std::size_t g) {
    const std::size_t begin = g * per_group;
    const std::size_t end = std::min(n, begin + per_group);
    if (per_group > 1 || s <= kRowsPerTape) {
      Tensor eps_z(Shape{(end - begin) * s, cfg.dim_z});
      Tensor eps_zeta(Shape{(end - begin) * s, cfg.dim_zeta});
      for (std::size_t i = begin; i < end; ++i) {
        Rng rng(derive_seed(seed, i));
        Tensor ez = normal_tensor(s, cfg.dim_z, rng);
        Tensor ezeta = normal_tensor(s, cfg.dim_zeta, rng);
        std::copy(ez.storage().begin(), ez.storage().end(), eps_z.storage().begin() + static_cast<std::ptrdiff_t>((i - begin) * s * cfg.dim_z));
        std::copy(ezeta.storage().begin(), ezeta.storage().end(),
                  eps_zeta.storage().begin() + static_cast<std::ptrdiff_t>((i - begin) * s * cfg.dim_zeta));
      }
      const std::vector<double> w = joint_log_weights(model, rows_of(x, begin, end), eps_z, eps_zeta, s);
      for (std::size_t i = begin; i < end; ++i) {
        out[i] = log_mean_exp(std::span<const double>(w).subspan((i - begin) * s, s));
      }
      return;
    }
    // One datum with more samples than fit on a tape: split the samples.
    Rng rng(derive_seed(seed, begin));
    const Tensor ez = normal_tensor(s, cfg.dim_z, rng);
    const Tensor ezeta = normal_tensor(s, cfg.dim_zeta, rng);
    const Tensor xi = rows_of(x, begin, begin + 1);
    std::vector<double> w;
    w.reserve(s);
    for (std::size_t c = 0; c < s; c += kRowsPerTape) {
      const std::size_t ce = std::min(s, c + kRowsPerTape);
      const std::vector<double> part = joint_log_weights(model, xi, rows_of(ez, c, ce), rows_of(ezeta, c, ce), ce - c);
      w.insert(w.end(), part.begin(), part.end());
    }
    out[begin] = log_mean_exp(w);
  });
  for (double v : out) {
    if (!std::isfinite(v)) throw NonFiniteError("non-finite importance weight in test log-likelihood");
  }
  return out;
}

ActiveUnitsReport active_units(const VhpModel& model, const Tensor& x, double threshold, std::uint64_t seed) {
  require_data(model, x);
  const ModelConfig& cfg = model.config();
  Rng rng(derive_seed(seed, kActiveStream));
  std::vector<double> total(cfg.dim_zeta, 0.0);
  for (std::size_t begin = 0; begin < x.rows(); begin += kRowsPerTape) {
    const std::size_t end = std::min(x.rows(), begin + kRowsPerTape);
    const Tensor eps = normal_tensor(end - begin, cfg.dim_z, rng);
    Tape tape;
    BoundModel m = bind(tape, model, false, false);
    Var z = reparam_sample(encode(m, tape.constant(rows_of(x, begin, end))), tape.constant(eps));
    GaussianVar q = inner_encode(m, z);
    const Tensor& mu = q.mean.value();
    const Tensor& ls = q.log_std.value();
    for (std::size_t r = 0; r < mu.rows(); ++r) {
      for (std::size_t j = 0; j < cfg.dim_zeta; ++j) {
        total[j] += 0.5 * (std::exp(2.0 * ls(r, j)) + mu(r, j) * mu(r, j) - 1.0) - ls(r, j);
      }
    }
  }
  ActiveUnitsReport rep;
  rep.threshold = threshold;
  rep.dims.resize(cfg.dim_zeta);
  std::iota(rep.dims.begin(), rep.dims.end(), std::size_t{0});
  std::vector<double> mean(cfg.dim_zeta);
  for (std::size_t j = 0; j < cfg.dim_zeta; ++j) mean[j] = total[j] / static_cast<double>(x.rows());
  std::stable_sort(rep.dims.begin(), rep.dims.end(), [&](std::size_t a, std::size_t b) { return mean[a] > mean[b]; });
  for (std::size_t j : rep.dims) {
    rep.kl.push_back(mean[j]);
    if (mean[j] > threshold) ++rep.active;
  }
  return rep;
}

EvalReport rate_distortion(const VhpModel& model, const Tensor& x, std::size_t s, std::uint64_t seed) {
  require_data(model, x);
  const ModelConfig& cfg = model.config();
  EvalReport rep;
  rep.samples = s;
  rep.iw_samples = cfg.iw_samples;
  rep.nll = test_loglik_iw(model, x, s, seed);
  double nll_sum = 0.0;
  for (double& v : rep.nll) {
    v = -v;
    nll_sum += v;
  }
  rep.mean_nll = nll_sum / static_cast<double>(x.rows());

  Rng rng(derive_seed(seed, kRateStream));
  const std::size_t chunk = std::max<std::size_t>(1, kRowsPerTape / cfg.iw_samples);
  double rate_sum = 0.0;
  double distortion_sum = 0.0;
  for (std::size_t begin = 0; begin < x.rows(); begin += chunk) {
    const std::size_t end = std::min(x.rows(), begin + chunk);
    const Noise noise = draw_noise(cfg, end - begin, rng);
    Tape tape;
    ReconstructionPass pass = reconstruction_pass(tape, model, rows_of(x, begin, end), noise.eps_z, false);
    bind_inner(tape, pass.bound, false);
    Var kl = iw_kl_terms(pass.bound, pass.posterior, pass.z, noise.eps_zeta, cfg.iw_samples);
    for (double v : kl.value().data()) rate_sum += v;
    distortion_sum += pass.recon.value().item() * static_cast<double>(end - begin);
  }
  rep.rate = rate_sum / static_cast<double>(x.rows());
  rep.distortion = distortion_sum / static_cast<double>(x.rows());
  return rep;
}

double wrap_pi(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(a + std::numbers::pi, two_pi);
  if (r < 0.0) r += two_pi;
  r -= std::numbers::pi;
  return r == -std::numbers::pi ? std::numbers::pi : r;
}

AngleFit fit_angles(const Tensor& latents, std::span<const double> angles) {
  if (latents.rank() != 2 || latents.cols() != 2) throw ShapeError("angle regression needs 2-d latents");
  const std::size_t n = latents.rows();
  if (n != angles.size()) throw ShapeError("latent and angle counts differ");
  if (n < 1) throw DomainError("angle regression needs data");

  AngleFit fit;
  // Algebraic circle fit: x^2 + y^2 + D x + E y + F = 0 in the least-squares sense.
  Eigen::MatrixXd a(n, 3);
  Eigen::VectorXd b(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = latents(i, 0);
    const double y = latents(i, 1);
    a(static_cast<Eigen::Index>(i), 0) = x;
    a(static_cast<Eigen::Index>(i), 1) = y;
    a(static_cast<Eigen::Index>(i), 2) = 1.0;
    b(static_cast<Eigen::Index>(i)) = -(x * x + y * y);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  bool ok = n >= 3 && qr.rank() == 3;
  if (ok) {
    const Eigen::Vector3d sol = qr.solve(b);
    fit.centre_x = -0.5 * sol(0);
    fit.centre_y = -0.5 * sol(1);
    const double r2 = fit.centre_x * fit.centre_x + fit.centre_y * fit.centre_y - sol(2);
    ok = std::isfinite(r2) && r2 > 0.0;
  }
  if (!ok) {
    fit.centre_x = 0.0;
    fit.centre_y = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      fit.centre_x += latents(i, 0) / static_cast<double>(n);
      fit.centre_y += latents(i, 1) / static_cast<double>(n);
    }
  }

  std::vector<double> phi(n);
  for (std::size_t i = 0; i < n; ++i) phi[i] = std::atan2(latents(i, 1) - fit.centre_y, latents(i, 0) - fit.centre_x);

  fit.error = std::numeric_limits<double>::infinity();
  for (int s : {1, -1}) {
    double sx = 0.0;
    double cx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = angles[i] - s * phi[i];
      sx += std::sin(r);
      cx += std::cos(r);
    }
    const double c = std::atan2(sx, cx);
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) err += std::abs(wrap_pi(angles[i] - (s * phi[i] + c)));
    err /= static_cast<double>(n);
    if (err < fit.error) {
      fit.error = err;
      fit.orientation = s;
      fit.offset = c;
    }
  }
  return fit;
}

double predict_angle(const AngleFit& fit, std::span<const double> z) {
  if (z.size() != 2) throw ShapeError("angle prediction needs a 2-d latent");
  const double phi = std::atan2(z[1] - fit.centre_y, z[0] - fit.centre_x);
  double a = std::fmod(fit.orientation * phi + fit.offset, 2.0 * std::numbers::pi);
  if (a < 0.0) a += 2.0 * std::numbers::pi;
  return a;
}

AngleFit angle_regression(const VhpModel& model, const Tensor& images, std::span<const double> angles) {
  if (model.config().dim_z != 2) throw ShapeError("angle regression needs a model with 2-d latents");
  require_data(model, images);
  Tensor z(Shape{images.rows(), 2});
  for (std::size_t begin = 0; begin < images.rows(); begin += kRowsPerTape) {
    const std::size_t end = std::min(images.rows(), begin + kRowsPerTape);
    const Tensor part = latentgraph::encode_means(model, rows_of(images, begin, end));
    std::copy(part.storage().begin(), part.storage().end(), z.storage().begin() + static_cast<std::ptrdiff_t>(begin * 2));
  }
  return fit_angles(z, angles);
}

void write_report_csv(const EvalReport& r, std::ostream& out) {
  char buf[32];
  auto row = [&](const char* name, double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << name << ',' << buf << '\n';
  };
  out << "metric,value\n";
  row("nll", r.mean_nll);
  row("rate", r.rate);
  row("distortion", r.distortion);
  row("samples", static_cast<double>(r.samples));
  row("iw_samples", static_cast<double>(r.iw_samples));
  row("data", static_cast<double>(r.nll.size()));
}

void write_active_units_csv(const ActiveUnitsReport& r, std::ostream& out) {
  char buf[32];
  out << "rank,dim,expected_kl\n";
  for (std::size_t i = 0; i < r.dims.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", r.kl[i]);
    out << i << ',' << r.dims[i] << ',' << buf << '\n';
  }
}

}  // namespace vhp::evalmetrics
