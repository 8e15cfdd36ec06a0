#pragma once

#include <cstddef>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace vhp::diffcore {

using Shape = std::vector<std::size_t>;

// Eigen picks its vectorised summation order from the runtime alignment of the
// data, so every buffer starts on a 64-byte boundary to keep results a pure
// function of the shape.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

using Storage = std::vector<double, AlignedAllocator<double>>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles.
///
/// Rank 0, 1 and 2 are the working ranks of the autodiff ops: a rank-1 tensor
/// of length n behaves as a 1 x n row and a scalar as 1 x 1. Higher ranks are
/// storable (e.g. image stacks) and can be reshaped down before use.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor zeros(std::size_t rows, std::size_t cols);
  static Tensor filled(Shape shape, double value);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  /// Row count when viewed as a matrix.
  std::size_t rows() const;
  /// Column count when viewed as a matrix.
  std::size_t cols() const;

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  Storage& storage() { return data_; }
  const Storage& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  /// Value of a single-element tensor.
  double item() const;

  std::span<const double> row(std::size_t r) const;
  std::span<double> row(std::size_t r);

  /// Same data under a new shape of equal element count.
  Tensor reshaped(Shape shape) const;

  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  Storage data_;
};

/// Copies the listed rows of a matrix into a new matrix.
Tensor gather_rows(const Tensor& source, std::span<const std::size_t> indices);

}  // namespace vhp::diffcore
