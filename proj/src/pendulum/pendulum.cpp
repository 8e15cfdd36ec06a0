#include "vhp/pendulum/pendulum.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "vhp/error.hpp"
#include "vhp/util/atomic_file.hpp"
#include "vhp/util/rng.hpp"

namespace vhp::pendulum {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_angle(double theta) {
  double t = std::fmod(theta, kTwoPi);
  if (t < 0.0) t += kTwoPi;
  if (t >= kTwoPi) t = 0.0;
  return t;
}

// Snaps to a grid of 2^-32 turns so theta and theta + 2 pi (which differ in the last
// bits after rounding) draw the same picture; the grid is symmetric under theta -> -theta.
double render_angle(double theta) {
  constexpr double kSteps = 4294967296.0;
  double u = theta / kTwoPi;
  u -= std::floor(u);
  const auto k = static_cast<std::uint64_t>(std::llround(u * kSteps)) % 4294967296ull;
  return kTwoPi * (static_cast<double>(k) / kSteps);
}

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax;
  const double dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double u = len2 > 0.0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
  u = std::clamp(u, 0.0, 1.0);
  return std::hypot(px - (ax + u * dx), py - (ay + u * dy));
}

// Coverage of a sub-sample at signed distance d from an edge, with a one-sub-pixel ramp.
double coverage(double d, double ramp) { return std::clamp(0.5 - d / ramp, 0.0, 1.0); }

}  // namespace

std::vector<double> render(double theta, const PendulumSpec& spec) {
  if (!std::isfinite(theta)) throw DomainError("pendulum angle must be finite");
  if (spec.size == 0 || spec.supersample == 0) throw DomainError("pendulum image size must be positive");
  const double t = render_angle(theta);
  const double bx = spec.pivot_x + spec.length * std::sin(t);
  const double by = spec.pivot_y + spec.length * std::cos(t);
  const std::size_t ss = spec.supersample;
  const double step = 1.0 / static_cast<double>(ss);
  std::vector<double> img(spec.size * spec.size, 0.0);
  for (std::size_t i = 0; i < spec.size; ++i) {
    for (std::size_t j = 0; j < spec.size; ++j) {
      double acc = 0.0;
      for (std::size_t a = 0; a < ss; ++a) {
        for (std::size_t b = 0; b < ss; ++b) {
          const double px = static_cast<double>(j) + (static_cast<double>(b) + 0.5) * step;
          const double py = static_cast<double>(i) + (static_cast<double>(a) + 0.5) * step;
          const double rod = coverage(segment_distance(px, py, spec.pivot_x, spec.pivot_y, bx, by) - spec.rod_half_width, step);
          const double bob = coverage(std::hypot(px - bx, py - by) - spec.bob_radius, step);
          acc += std::max(rod, bob);
        }
      }
      img[i * spec.size + j] = acc / static_cast<double>(ss * ss);
    }
  }
  return img;
}

Dataset generate(std::size_t n, std::uint64_t seed, const PendulumSpec& spec) {
  if (n < 1) throw DomainError("dataset size must be >= 1");
  Rng rng(seed);
  Dataset d{Tensor(diffcore::Shape{n, spec.size * spec.size}), {}};
  d.angles.reserve(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double theta = wrap_angle(rng.uniform(0.0, kTwoPi));
    d.angles.push_back(theta);
    const std::vector<double> img = render(theta, spec);
    std::copy(img.begin(), img.end(), d.images.row(r).begin());
  }
  return d;
}

// ---- tensor files -------------------------------------------------------------

namespace {

constexpr char kTensorMagic[4] = {'V', 'H', 'P', 'T'};
constexpr unsigned char kTensorVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError("tensor file header is truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void write_tensor(const Tensor& t, std::ostream& out) {
  if (t.rank() > 255) throw ShapeError("tensor rank too large for the file format");
  std::uint64_t count = 1;
  for (std::size_t d : t.shape()) {
    if (d > 0xFFFFFFFFu) throw ShapeError("tensor dimension too large for the file format");
    count *= d;
  }
  if (count > kMaxTensorElements) throw ShapeError("tensor too large for the file format");
  out.write(kTensorMagic, 4);
  out.put(static_cast<char>(kTensorVersion));
  out.put(static_cast<char>(t.rank()));
  for (std::size_t d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
  for (double v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

Tensor read_tensor(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kTensorMagic)) throw FormatError("not a tensor file: bad magic");
  const int version = in.get();
  if (version == std::char_traits<char>::eof()) throw FormatError("tensor file header is truncated");
  if (version != kTensorVersion) throw FormatError("unsupported tensor file version " + std::to_string(version));
  const int rank = in.get();
  if (rank == std::char_traits<char>::eof()) throw FormatError("tensor file header is truncated");
  diffcore::Shape shape;
  std::uint64_t count = 1;
  for (int i = 0; i < rank; ++i) {
    const std::uint32_t d = get_u32(in);
    if (d == 0) throw FormatError("tensor file has a zero dimension");
    count *= d;
    if (count > kMaxTensorElements) throw FormatError("tensor file dimensions exceed 2^31 elements");
    shape.push_back(d);
  }
  // Read in bounded chunks so a forged header cannot force a huge allocation up front.
  constexpr std::uint64_t kChunk = std::uint64_t{1} << 20;
  std::vector<double> data;
  std::vector<unsigned char> raw;
  for (std::uint64_t done = 0; done < count;) {
    const std::uint64_t n = std::min(kChunk, count - done);
    raw.resize(n * 4);
    if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
      throw FormatError("tensor file payload is truncated");
    }
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(raw[4 * i + b]) << (8 * b);
      const double v = static_cast<double>(std::bit_cast<float>(bits));
      if (!std::isfinite(v)) throw FormatError("tensor file holds NaN/Inf");
      data.push_back(v);
    }
    done += n;
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("tensor file has trailing bytes");
  return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const Tensor& t, const std::filesystem::path& path) {
  write_file_atomic(path, [&](std::ostream& out) { write_tensor(t, out); });
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open tensor file '" + path.string() + "'");
  return read_tensor(in);
}

std::filesystem::path angles_path(const std::filesystem::path& tensor_path) {
  std::filesystem::path p = tensor_path;
  p.replace_extension(".angles.csv");
  return p;
}

void save_angles(const std::vector<double>& angles, const std::filesystem::path& path) {
  write_file_atomic(path, [&](std::ostream& out) {
    out << "index,angle_radians\n";
    char buf[32];
    for (std::size_t i = 0; i < angles.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", angles[i]);
      out << i << ',' << buf << '\n';
    }
  });
}

std::vector<double> load_angles(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open angle file '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != "index,angle_radians") throw FormatError("angle file has an unexpected header");
  std::vector<double> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    std::size_t idx = 0;
    double v = 0.0;
    if (comma == std::string::npos ||
        std::from_chars(line.data(), line.data() + comma, idx).ec != std::errc{} ||
        std::from_chars(line.data() + comma + 1, line.data() + line.size(), v).ec != std::errc{} || idx != out.size()) {
      throw FormatError("angle file line " + std::to_string(lineno) + " is malformed");
    }
    out.push_back(v);
  }
  return out;
}

}  // namespace vhp::pendulum
