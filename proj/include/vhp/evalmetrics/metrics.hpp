#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "vhp/stochastic/model.hpp"

namespace vhp::evalmetrics {

using diffcore::Tensor;
using stochastic::VhpModel;

/// Worker threads for data-parallel evaluation: VHP_THREADS if set (>= 1), else hardware concurrency.
std::size_t worker_count();

/// Joint two-layer importance-sampled log p(x) per row of x, with S samples.
/// Datum i uses its own stream derived from (seed, i), so results do not depend on the thread count.
std::vector<double> test_loglik_iw(const VhpModel& model, const Tensor& x, std::size_t s, std::uint64_t seed);

struct ActiveUnitsReport {
  std::vector<std::size_t> dims;  // zeta dimension ids, sorted by descending expected KL
  std::vector<double> kl;         // matching expected KL values
  std::size_t active = 0;         // count with kl > threshold
  double threshold = 0.0;
};

inline constexpr double kActiveThreshold = 0.01;

/// Per-dimension mean over the data of KL(q_Phi(zeta_j | z) || N(0, 1)), with one z ~ q_phi(z | x) per datum.
ActiveUnitsReport active_units(const VhpModel& model, const Tensor& x, double threshold, std::uint64_t seed);

struct EvalReport {
  std::vector<double> nll;  // per datum
  double mean_nll = 0.0;
  double rate = 0.0;        // mean IW KL bound (K from the model)
  double distortion = 0.0;  // mean -log p_theta(x | z), one posterior sample
  std::size_t samples = 0;  // S used for the NLL
  std::size_t iw_samples = 0;
};

EvalReport rate_distortion(const VhpModel& model, const Tensor& x, std::size_t s, std::uint64_t seed);

/// Polar map of 2-d latents onto angles: theta = orientation * atan2(z - centre) + offset.
struct AngleFit {
  double centre_x = 0.0;
  double centre_y = 0.0;
  int orientation = 1;
  double offset = 0.0;
  double error = 0.0;  // mean absolute circular error on the fitting data, radians
};

/// Wraps into (-pi, pi].
double wrap_pi(double a);

/// Fits an AngleFit to latent points [n x 2] and true angles.
AngleFit fit_angles(const Tensor& latents, std::span<const double> angles);
double predict_angle(const AngleFit& fit, std::span<const double> z);

/// Encodes images to posterior means and fits the polar map; throws unless dim_z == 2.
AngleFit angle_regression(const VhpModel& model, const Tensor& images, std::span<const double> angles);

/// "metric,value" rows.
void write_report_csv(const EvalReport& r, std::ostream& out);
/// "rank,dim,expected_kl" rows in descending order.
void write_active_units_csv(const ActiveUnitsReport& r, std::ostream& out);

}  // namespace vhp::evalmetrics
