#pragma once

#include <cmath>
#include <limits>
#include <string>

#include "ptycho/error.hpp"
#include "ptycho/fft.hpp"
#include "ptycho/field.hpp"
#include "ptycho/forward.hpp"
#include "ptycho/lattice.hpp"

namespace ptycho {

/// Reported SNRs saturate here; an exact reconstruction maps to this value.
inline constexpr double kSnrCapDb = 300.0;

inline double cap_snr(double db) { return std::isnan(db) ? db : std::min(db, kSnrCapDb); }

/// sum_j || |z_j| - sqrt(f_j) ||_1 / || sqrt(f) ||_1 for a precomputed z = A(omega, u).
inline double r_factor(const ComplexStack& z, const RealStack& f) {
  detail::check_stacks(z, f);
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double a = std::sqrt(f[i]);
    num += std::abs(std::abs(z[i]) - a);
    den += a;
  }
  if (!(den > 0.0)) throw DataError("r_factor: measured magnitudes are identically zero");
  return num / den;
}

inline double r_factor(const ComplexField& omega, const ComplexField& u, const RealStack& f,
                       const ScanLattice& lat) {
  return r_factor(forward(omega, u, lat), f);
}

/// Best trivial-ambiguity alignment of a reconstruction onto the truth:
/// zeta * recon(t + shift) ~ truth(t), shift taken cyclically.
struct Alignment {
  cplx zeta{1.0, 0.0};
  int shift_row = 0;
  int shift_col = 0;
  double residual = 0.0;
};

struct SnrResult {
  double db = 0.0;
  Alignment alignment;
};

/// out(r, c) = u(r + dr, c + dc), indices modulo the sides.
template <class T>
Grid<T> cyclic_shift(const Grid<T>& u, int dr, int dc) {
  Grid<T> out(u.rows(), u.cols());
  const int R = static_cast<int>(u.rows());
  const int C = static_cast<int>(u.cols());
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < C; ++c)
      out(r, c) = u(((r + dr) % R + R) % R, ((c + dc) % C + C) % C);
  return out;
}

namespace detail {

// A relative residual below n * eps^2 is indistinguishable from rounding in
// the residual sum itself and is reported as exact recovery.
inline double snr_from(double residual, double signal, std::size_t n = 1) {
  const double eps = std::numeric_limits<double>::epsilon();
  if (residual <= static_cast<double>(n) * eps * eps * signal) return kSnrCapDb;
  return cap_snr(-10.0 * std::log10(residual / signal));
}

}  // namespace detail

/// SNR of `recon` against `truth` after removing global complex scaling and
/// cyclic translation:
///   SNR = -10 log10( sum_t |zeta* recon(t+T*) - truth(t)|^2 / ||zeta* recon||^2 ).
/// The translation maximizing |sum_t truth(t) conj(recon(t+T))| is found
/// with one FFT correlation; zeta and the residual are then recomputed
/// directly at that shift. Ties go to the lexicographically smallest shift.
inline SnrResult snr_aligned(const ComplexField& recon, const ComplexField& truth) {
  if (!recon.same_shape(truth)) throw DataError("snr_aligned: shape mismatch");
  const double energy = norm_sq(recon.span());
  if (!(energy > 0.0)) throw DataError("snr_aligned: reconstruction is identically zero");

  const std::size_t R = recon.rows();
  const std::size_t C = recon.cols();
  ComplexField gt = unitary_dft(truth);
  ComplexField rc = unitary_dft(recon);
  ComplexField prod(R, C);
  for (std::size_t i = 0; i < prod.size(); ++i) prod[i] = gt[i] * std::conj(rc[i]);
  ComplexField corr = unitary_dft(prod);  // proportional to C(T)

  std::size_t best = 0;
  double best_mag = -1.0;
  for (std::size_t i = 0; i < corr.size(); ++i) {
    const double mag = std::abs(corr[i]);
    if (mag > best_mag) {
      best_mag = mag;
      best = i;
    }
  }
  const int dr = static_cast<int>(best / C);
  const int dc = static_cast<int>(best % C);

  ComplexField shifted = cyclic_shift(recon, dr, dc);
  const cplx zeta = inner(truth.span(), shifted.span()) / energy;
  double residual = 0.0;
  for (std::size_t i = 0; i < shifted.size(); ++i) residual += std::norm(zeta * shifted[i] - truth[i]);
  const double signal = std::norm(zeta) * energy;

  SnrResult out;
  out.alignment = {zeta, dr, dc, residual};
  out.db = signal > 0.0 ? detail::snr_from(residual, signal, shifted.size())
                        : -std::numeric_limits<double>::infinity();
  return out;
}

/// -10 log10(||f - a^2||^2 / ||a^2||^2) for noisy counts f and clean magnitudes a.
inline double snr_intensity(const RealStack& f_noisy, const RealStack& clean_magnitudes) {
  detail::check_stacks(f_noisy, clean_magnitudes);
  double err = 0.0;
  double sig = 0.0;
  for (std::size_t i = 0; i < f_noisy.size(); ++i) {
    const double clean = clean_magnitudes[i] * clean_magnitudes[i];
    err += (f_noisy[i] - clean) * (f_noisy[i] - clean);
    sig += clean * clean;
  }
  if (!(sig > 0.0)) throw DataError("snr_intensity: clean intensity is identically zero");
  return detail::snr_from(err, sig);
}

}  // namespace ptycho
