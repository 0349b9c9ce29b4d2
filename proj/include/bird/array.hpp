#pragma once

#include <cstddef>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace bird {

/// Dense real array of rank 0 (scalar), 1 (vector) or 2 (row-major matrix).
/// All arithmetic in the library runs on 64-bit doubles.
class Array {
 public:
  Array() : rank_(0), d0_(1), d1_(1), v_(1, 0.0) {}

  static Array scalar(double v) {
    Array a;
    a.v_[0] = v;
    return a;
  }

  static Array zeros_like(const Array& other) {
    Array a = other;
    std::fill(a.v_.begin(), a.v_.end(), 0.0);
    return a;
  }

  static Array vector(std::vector<double> v) {
    Array a;
    a.rank_ = 1;
    a.d0_ = v.size();
    a.d1_ = 1;
    a.v_ = std::move(v);
    return a;
  }

  static Array zeros(std::size_t n) { return vector(std::vector<double>(n, 0.0)); }

  static Array zeros(std::size_t rows, std::size_t cols) {
    Array a;
    a.rank_ = 2;
    a.d0_ = rows;
    a.d1_ = cols;
    a.v_.assign(rows * cols, 0.0);
    return a;
  }

  static Array full(std::size_t rows, std::size_t cols, double value) {
    Array a = zeros(rows, cols);
    std::fill(a.v_.begin(), a.v_.end(), value);
    return a;
  }

  int rank() const { return rank_; }
  std::size_t rows() const { return d0_; }
  std::size_t cols() const { return d1_; }
  std::size_t size() const { return v_.size(); }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }

  double& operator[](std::size_t i) { return v_[i]; }
  double operator[](std::size_t i) const { return v_[i]; }

  double& at(std::size_t r, std::size_t c) { return v_[r * d1_ + c]; }
  double at(std::size_t r, std::size_t c) const { return v_[r * d1_ + c]; }

  /// Scalar payload of a rank-0 array.
  double item() const {
    if (rank_ != 0) throw std::logic_error("Array::item on non-scalar " + shape_str());
    return v_[0];
  }

  bool same_shape(const Array& o) const {
    return rank_ == o.rank_ && d0_ == o.d0_ && d1_ == o.d1_;
  }

  bool all_finite() const {
    for (double x : v_)
      if (!std::isfinite(x)) return false;
    return true;
  }

  std::string shape_str() const {
    if (rank_ == 0) return "[scalar]";
    if (rank_ == 1) return "[" + std::to_string(d0_) + "]";
    return "[" + std::to_string(d0_) + "x" + std::to_string(d1_) + "]";
  }

  /// Reinterprets the flat payload under a new shape; element count must match.
  Array reshaped(int rank, std::size_t d0, std::size_t d1) const {
    std::size_t n = rank == 0 ? 1 : (rank == 1 ? d0 : d0 * d1);
    if (n != v_.size())
      throw std::invalid_argument("reshape: size mismatch for " + shape_str());
    Array a = *this;
    a.rank_ = rank;
    a.d0_ = rank == 0 ? 1 : d0;
    a.d1_ = rank == 2 ? d1 : 1;
    return a;
  }

 private:
  int rank_;
  std::size_t d0_, d1_;
  std::vector<double> v_;
};

inline double dot(const Array& a, const Array& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double l2_norm_sq(const Array& a) { return dot(a, a); }

inline double max_abs_diff(const Array& a, const Array& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace bird
