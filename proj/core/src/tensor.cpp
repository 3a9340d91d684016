#include "tuned/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Core>

#include "tuned/errors.hpp"

namespace tuned {

std::string shape_string(std::size_t rows, std::size_t cols) {
  return "(" + std::to_string(rows) + " x " + std::to_string(cols) + ")";
}

Tensor2D::Tensor2D(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor2D::Tensor2D(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(data.begin(), data.end()) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("Tensor2D: data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_string(rows_, cols_));
  }
}

Tensor2D::Tensor2D(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("Tensor2D: ragged initializer list");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Tensor2D Tensor2D::identity(std::size_t n) {
  Tensor2D out(n, n);
  for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
  return out;
}

Tensor2D Tensor2D::row_vector(std::span<const double> values) {
  return Tensor2D(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

void Tensor2D::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

std::string Tensor2D::shape() const { return shape_string(rows_, cols_); }

void require_same_shape(const Tensor2D& a, const Tensor2D& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.shape() + " vs " + b.shape());
  }
}

Tensor2D& Tensor2D::operator+=(const Tensor2D& other) {
  require_same_shape(*this, other, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor2D& Tensor2D::operator-=(const Tensor2D& other) {
  require_same_shape(*this, other, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Tensor2D& Tensor2D::operator*=(double scalar) {
  for (double& v : data_) v *= scalar;
  return *this;
}

Tensor2D operator+(Tensor2D lhs, const Tensor2D& rhs) { return lhs += rhs; }
Tensor2D operator-(Tensor2D lhs, const Tensor2D& rhs) { return lhs -= rhs; }
Tensor2D operator*(Tensor2D lhs, double scalar) { return lhs *= scalar; }
Tensor2D operator*(double scalar, Tensor2D rhs) { return rhs *= scalar; }

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMajor> view(const Tensor2D& t) {
  return {t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

Eigen::Map<RowMajor> view(Tensor2D& t) {
  return {t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

}  // namespace

Tensor2D matmul(const Tensor2D& a, const Tensor2D& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ " + a.shape() + " * " + b.shape());
  }
  Tensor2D out(a.rows(), b.cols());
  if (!out.empty() && a.cols() > 0) view(out).noalias() = view(a) * view(b);
  return out;
}

Tensor2D matmul_tn(const Tensor2D& a, const Tensor2D& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn: row counts differ " + a.shape() + "ᵀ * " + b.shape());
  }
  Tensor2D out(a.cols(), b.cols());
  if (!out.empty() && a.rows() > 0) view(out).noalias() = view(a).transpose() * view(b);
  return out;
}

Tensor2D matmul_nt(const Tensor2D& a, const Tensor2D& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: column counts differ " + a.shape() + " * " + b.shape() + "ᵀ");
  }
  Tensor2D out(a.rows(), b.rows());
  if (!out.empty() && a.cols() > 0) view(out).noalias() = view(a) * view(b).transpose();
  return out;
}

Tensor2D transpose(const Tensor2D& a) {
  Tensor2D out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Tensor2D hadamard(const Tensor2D& a, const Tensor2D& b) {
  require_same_shape(a, b, "hadamard");
  Tensor2D out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= b.data()[i];
  return out;
}

Tensor2D column_sums(const Tensor2D& a) {
  Tensor2D out(1, a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(0, j) += a(i, j);
  return out;
}

Tensor2D gather_rows(const Tensor2D& a, std::span<const std::size_t> indices) {
  Tensor2D out(indices.size(), a.cols());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= a.rows()) {
      throw ShapeError("gather_rows: index " + std::to_string(indices[r]) + " out of range for " +
                       a.shape());
    }
    std::copy_n(a.data() + indices[r] * a.cols(), a.cols(), out.data() + r * a.cols());
  }
  return out;
}

Tensor2D vstack(const Tensor2D& a, const Tensor2D& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("vstack: column counts differ " + a.shape() + " vs " + b.shape());
  }
  std::vector<double> data(a.values().begin(), a.values().end());
  data.insert(data.end(), b.values().begin(), b.values().end());
  return Tensor2D(a.rows() + b.rows(), a.cols(), std::move(data));
}

double sum(const Tensor2D& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return s;
}

double frobenius_sq(const Tensor2D& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return s;
}

double max_abs_diff(const Tensor2D& a, const Tensor2D& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

bool all_finite(const Tensor2D& a) {
  return std::all_of(a.values().begin(), a.values().end(), [](double v) { return std::isfinite(v); });
}

}  // namespace tuned
