#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ptycho/error.hpp"

namespace ptycho {

using cplx = std::complex<double>;

/// Dense row-major 2-D array. Used for images, probes and single frames.
template <class T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {
    if (rows == 0 || cols == 0) throw DataError("grid sides must be positive");
  }
  Grid(std::size_t rows, std::size_t cols, std::vector<T> values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (rows == 0 || cols == 0) throw DataError("grid sides must be positive");
    if (values_.size() != rows * cols)
      throw DataError("grid value count " + std::to_string(values_.size()) + " != " +
                      std::to_string(rows) + "x" + std::to_string(cols));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }

  std::span<T> span() noexcept { return values_; }
  std::span<const T> span() const noexcept { return values_; }
  std::vector<T>& values() noexcept { return values_; }
  const std::vector<T>& values() const noexcept { return values_; }

  template <class U>
  bool same_shape(const Grid<U>& o) const noexcept {
    return rows_ == o.rows() && cols_ == o.cols();
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> values_;
};

using ComplexField = Grid<cplx>;
using RealField = Grid<double>;

/// J square frames of side `side`, stored frame-major and row-major within
/// a frame. Holds diffraction data, exit waves, auxiliary variables and
/// multipliers, which all live on the same stacked geometry.
template <class T>
class FrameStack {
 public:
  using value_type = T;

  FrameStack() = default;
  FrameStack(std::size_t frames, std::size_t side, T fill = T{})
      : frames_(frames), side_(side), values_(frames * side * side, fill) {
    if (frames == 0 || side == 0) throw DataError("stack dimensions must be positive");
  }
  FrameStack(std::size_t frames, std::size_t side, std::vector<T> values)
      : frames_(frames), side_(side), values_(std::move(values)) {
    if (frames == 0 || side == 0) throw DataError("stack dimensions must be positive");
    if (values_.size() != frames * side * side)
      throw DataError("stack value count does not match J*side*side");
  }

  std::size_t frames() const noexcept { return frames_; }
  std::size_t side() const noexcept { return side_; }
  std::size_t frame_size() const noexcept { return side_ * side_; }
  std::size_t size() const noexcept { return values_.size(); }

  std::span<T> frame(std::size_t j) { return {values_.data() + j * frame_size(), frame_size()}; }
  std::span<const T> frame(std::size_t j) const {
    return {values_.data() + j * frame_size(), frame_size()};
  }

  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }

  std::span<T> span() noexcept { return values_; }
  std::span<const T> span() const noexcept { return values_; }
  std::vector<T>& values() noexcept { return values_; }
  const std::vector<T>& values() const noexcept { return values_; }

  template <class U>
  bool same_shape(const FrameStack<U>& o) const noexcept {
    return frames_ == o.frames() && side_ == o.side();
  }

  friend bool operator==(const FrameStack&, const FrameStack&) = default;

 private:
  std::size_t frames_ = 0;
  std::size_t side_ = 0;
  std::vector<T> values_;
};

using ComplexStack = FrameStack<cplx>;
using RealStack = FrameStack<double>;

// Elementwise helpers shared by the solvers and the harness.

inline double norm_sq(std::span<const cplx> v) {
  double s = 0.0;
  for (const auto& x : v) s += std::norm(x);
  return s;
}

inline double max_abs(std::span<const cplx> v) {
  double m = 0.0;
  for (const auto& x : v) m = std::max(m, std::abs(x));
  return m;
}

inline double max_value(std::span<const double> v) {
  double m = v.empty() ? 0.0 : v[0];
  for (double x : v) m = std::max(m, x);
  return m;
}

inline double min_value(std::span<const double> v) {
  double m = v.empty() ? 0.0 : v[0];
  for (double x : v) m = std::min(m, x);
  return m;
}

/// Re<a, b> with the convention <a, b> = sum a * conj(b).
inline double real_inner(std::span<const cplx> a, std::span<const cplx> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i].real() * b[i].real() + a[i].imag() * b[i].imag();
  return s;
}

inline cplx inner(std::span<const cplx> a, std::span<const cplx> b) {
  cplx s{};
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * std::conj(b[i]);
  return s;
}

inline bool all_finite(std::span<const cplx> v) {
  return std::all_of(v.begin(), v.end(),
                     [](const cplx& x) { return std::isfinite(x.real()) && std::isfinite(x.imag()); });
}

/// sign(x) = x/|x|, with sign(0) = 1.
inline cplx unit_phase(cplx x) {
  const double a = std::abs(x);
  return a > 0.0 ? x / a : cplx{1.0, 0.0};
}

/// Elementwise projection onto {|x| <= cap}.
inline void clamp_modulus(std::span<cplx> v, double cap) {
  for (auto& x : v) {
    const double a = std::abs(x);
    if (a > cap) {
      x *= cap / a;
      while (std::abs(x) > cap) x *= std::nextafter(1.0, 0.0);
    }
  }
}

}  // namespace ptycho
