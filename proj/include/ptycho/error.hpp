#pragma once

#include <stdexcept>
#include <string>

namespace ptycho {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameters: lattice divisibility, unknown keys, bad stepsizes.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent or invalid data: shape mismatches, negative intensities,
/// degenerate inputs (all-zero data, all-zero iterates).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Iterates became non-finite or exceeded the blow-up threshold.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// A closed-form probe/image update hit a zero denominator. Raised by the
/// unpreconditioned ADMM and by DR when the scan does not overlap enough.
class OverlapViolation : public Error {
 public:
  OverlapViolation(const std::string& what, std::size_t pixel)
      : Error(what + " (pixel " + std::to_string(pixel) + ")"), pixel_(pixel) {}
  std::size_t pixel() const noexcept { return pixel_; }

 private:
  std::size_t pixel_;
};

}  // namespace ptycho
