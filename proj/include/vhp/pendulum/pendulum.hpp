#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "vhp/diffcore/tensor.hpp"

namespace vhp::pendulum {

using diffcore::Tensor;

/// Rod from the pivot to the bob centre at (cx + L sin(theta), cy + L cos(theta)),
/// in pixel coordinates with pixel (i, j) centred at (j + 0.5, i + 0.5), y pointing down.
struct PendulumSpec {
  std::size_t size = 16;
  double pivot_x = 8.0;
  double pivot_y = 8.0;
  double length = 6.0;
  double bob_radius = 2.0;
  double rod_half_width = 0.6;
  std::size_t supersample = 4;  // per axis
};

/// size x size image in [0, 1], row-major. theta is wrapped into [0, 2 pi).
std::vector<double> render(double theta, const PendulumSpec& spec = {});

struct Dataset {
  Tensor images;              // [n x size*size]
  std::vector<double> angles;  // radians in [0, 2 pi)
};

/// n i.i.d. uniform angles from `seed`, rendered.
Dataset generate(std::size_t n, std::uint64_t seed, const PendulumSpec& spec = {});

// ---- tensor files -------------------------------------------------------------
// "VHPT", version byte 1, rank (u8), dims (u32 LE each), payload f32 LE.

inline constexpr std::uint64_t kMaxTensorElements = std::uint64_t{1} << 31;

void write_tensor(const Tensor& t, std::ostream& out);
Tensor read_tensor(std::istream& in);
void save_tensor(const Tensor& t, const std::filesystem::path& path);
Tensor load_tensor(const std::filesystem::path& path);

/// Sibling label file: "<stem>.angles.csv" next to the tensor file (d.vhpt -> d.angles.csv).
std::filesystem::path angles_path(const std::filesystem::path& tensor_path);
void save_angles(const std::vector<double>& angles, const std::filesystem::path& path);
std::vector<double> load_angles(const std::filesystem::path& path);

}  // namespace vhp::pendulum
