#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "varnet/errors.hpp"

namespace varnet {

using cx = std::complex<double>;

// Dense 2D array, row-major.
template <typename T>
class Image2 {
 public:
  Image2() = default;
  Image2(long rows, long cols) : rows_(rows), cols_(cols), v_(rows * cols) {
    if (rows < 1 || cols < 1) throw InvalidInput("Image2: dimensions must be >= 1");
  }

  long rows() const { return rows_; }
  long cols() const { return cols_; }
  std::size_t size() const { return v_.size(); }

  T& operator()(long r, long c) { return v_[r * cols_ + c]; }
  const T& operator()(long r, long c) const { return v_[r * cols_ + c]; }
  T& operator[](std::size_t i) { return v_[i]; }
  const T& operator[](std::size_t i) const { return v_[i]; }

  T* data() { return v_.data(); }
  const T* data() const { return v_.data(); }
  auto begin() { return v_.begin(); }
  auto end() { return v_.end(); }
  auto begin() const { return v_.begin(); }
  auto end() const { return v_.end(); }

  bool same_shape(const Image2& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

 private:
  long rows_ = 0, cols_ = 0;
  std::vector<T> v_;
};

// Dense 3D array, plane-major (n, rows, cols): per-coil images, k-space,
// sensitivity maps.
template <typename T>
class Stack3 {
 public:
  Stack3() = default;
  Stack3(long n, long rows, long cols) : n_(n), rows_(rows), cols_(cols), v_(n * rows * cols) {
    if (n < 1 || rows < 1 || cols < 1) throw InvalidInput("Stack3: dimensions must be >= 1");
  }

  long n() const { return n_; }
  long rows() const { return rows_; }
  long cols() const { return cols_; }
  std::size_t size() const { return v_.size(); }

  T& operator()(long i, long r, long c) { return v_[(i * rows_ + r) * cols_ + c]; }
  const T& operator()(long i, long r, long c) const { return v_[(i * rows_ + r) * cols_ + c]; }
  T& operator[](std::size_t i) { return v_[i]; }
  const T& operator[](std::size_t i) const { return v_[i]; }

  T* data() { return v_.data(); }
  const T* data() const { return v_.data(); }
  T* plane(long i) { return v_.data() + i * rows_ * cols_; }
  const T* plane(long i) const { return v_.data() + i * rows_ * cols_; }
  auto begin() { return v_.begin(); }
  auto end() { return v_.end(); }
  auto begin() const { return v_.begin(); }
  auto end() const { return v_.end(); }

  bool same_shape(const Stack3& o) const {
    return n_ == o.n_ && rows_ == o.rows_ && cols_ == o.cols_;
  }

 private:
  long n_ = 0, rows_ = 0, cols_ = 0;
  std::vector<T> v_;
};

using CxImage = Image2<cx>;       // anatomy image x or single k-space plane
using RealImage = Image2<double>;
using CxStack = Stack3<cx>;

// Domain aliases; all share the (coils, rows, cols) layout.
using MultiCoilKspace = CxStack;
using CoilImages = CxStack;
using SensitivityMaps = CxStack;

inline bool all_finite(const CxImage& x) {
  for (const auto& v : x)
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
  return true;
}

inline bool all_finite(const CxStack& x) {
  for (const auto& v : x)
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
  return true;
}

inline bool all_finite(const RealImage& x) {
  for (const auto& v : x)
    if (!std::isfinite(v)) return false;
  return true;
}

template <typename A>
double norm2(const A& x) {
  double s = 0;
  for (const auto& v : x) s += std::norm(v);
  return std::sqrt(s);
}

inline double norm2(const RealImage& x) {
  double s = 0;
  for (const auto& v : x) s += v * v;
  return std::sqrt(s);
}

// Complex inner product <a, b> = sum conj(a) * b.
template <typename A>
cx cdot(const A& a, const A& b) {
  cx s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
  return s;
}

}  // namespace varnet
