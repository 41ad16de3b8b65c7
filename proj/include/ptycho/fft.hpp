#pragma once

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <span>
#include <tuple>
#include <vector>

#include "ptycho/field.hpp"

namespace ptycho {

enum class Direction { forward, inverse };

namespace detail {

// FFTW planning is not thread-safe, execution is. Plans are created once per
// (rows, cols, direction) under a lock with FFTW_ESTIMATE, which keeps the
// chosen algorithm independent of timing and therefore reproducible.
class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  fftw_plan get(int rows, int cols, Direction dir) {
    std::lock_guard lock(mutex_);
    const auto key = std::make_tuple(rows, cols, dir == Direction::forward);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    std::vector<cplx> scratch(static_cast<std::size_t>(rows) * cols);
    auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
    fftw_plan plan = fftw_plan_dft_2d(rows, cols, buf, buf,
                                      dir == Direction::forward ? FFTW_FORWARD : FFTW_BACKWARD,
                                      FFTW_ESTIMATE | FFTW_UNALIGNED);
    plans_.emplace(key, plan);
    return plan;
  }

  PlanCache(const PlanCache&) = delete;
  PlanCache& operator=(const PlanCache&) = delete;

 private:
  PlanCache() = default;
  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  std::mutex mutex_;
  std::map<std::tuple<int, int, bool>, fftw_plan> plans_;
};

}  // namespace detail

/// In-place orthonormal 2-D DFT of a rows x cols row-major block. Both
/// directions are scaled by 1/sqrt(rows*cols), so the inverse is the adjoint.
inline void dft_inplace(std::span<cplx> data, std::size_t rows, std::size_t cols, Direction dir) {
  fftw_plan plan = detail::PlanCache::instance().get(static_cast<int>(rows), static_cast<int>(cols), dir);
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(plan, buf, buf);
  const double scale = 1.0 / std::sqrt(static_cast<double>(rows * cols));
  for (auto& x : data) x *= scale;
}

inline ComplexField unitary_dft(ComplexField frame) {
  dft_inplace(frame.span(), frame.rows(), frame.cols(), Direction::forward);
  return frame;
}

inline ComplexField unitary_idft(ComplexField frame) {
  dft_inplace(frame.span(), frame.rows(), frame.cols(), Direction::inverse);
  return frame;
}

}  // namespace ptycho
