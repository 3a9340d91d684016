#pragma once

#include <cstddef>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace tuned {

/// Cache-line aligned storage. Vectorized kernels peel differently depending
/// on the buffer address, so a fixed alignment keeps results bit-reproducible.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

/// Dense row-major matrix of doubles. Every numeric quantity in the library
/// (features, weights, evidence, gradients) is carried in one of these.
class Tensor2D {
 public:
  Tensor2D() = default;
  Tensor2D(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor2D(std::size_t rows, std::size_t cols, std::vector<double> data);
  Tensor2D(std::initializer_list<std::initializer_list<double>> rows);

  static Tensor2D identity(std::size_t n);
  static Tensor2D row_vector(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  void fill(double value);
  bool same_shape(const Tensor2D& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  std::string shape() const;

  Tensor2D& operator+=(const Tensor2D& other);
  Tensor2D& operator-=(const Tensor2D& other);
  Tensor2D& operator*=(double scalar);

  bool operator==(const Tensor2D& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double, AlignedAllocator<double>> data_;
};

Tensor2D operator+(Tensor2D lhs, const Tensor2D& rhs);
Tensor2D operator-(Tensor2D lhs, const Tensor2D& rhs);
Tensor2D operator*(Tensor2D lhs, double scalar);
Tensor2D operator*(double scalar, Tensor2D rhs);

/// a * b
Tensor2D matmul(const Tensor2D& a, const Tensor2D& b);
/// aᵀ * b
Tensor2D matmul_tn(const Tensor2D& a, const Tensor2D& b);
/// a * bᵀ
Tensor2D matmul_nt(const Tensor2D& a, const Tensor2D& b);
Tensor2D transpose(const Tensor2D& a);
Tensor2D hadamard(const Tensor2D& a, const Tensor2D& b);

/// Column-wise sum, returned as a 1 x cols row.
Tensor2D column_sums(const Tensor2D& a);
/// Rows of `a` selected by `indices`, in order.
Tensor2D gather_rows(const Tensor2D& a, std::span<const std::size_t> indices);
/// Rows of `a` stacked on top of rows of `b`.
Tensor2D vstack(const Tensor2D& a, const Tensor2D& b);

double sum(const Tensor2D& a);
double frobenius_sq(const Tensor2D& a);
double max_abs_diff(const Tensor2D& a, const Tensor2D& b);
bool all_finite(const Tensor2D& a);

void require_same_shape(const Tensor2D& a, const Tensor2D& b, const char* what);

}  // namespace tuned
