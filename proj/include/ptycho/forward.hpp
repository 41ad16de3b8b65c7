#pragma once

#include <cmath>
#include <string>

#include "ptycho/fft.hpp"
#include "ptycho/field.hpp"
#include "ptycho/lattice.hpp"
#include "ptycho/parallel.hpp"

namespace ptycho {

namespace detail {

inline void check_pair(const ComplexField& omega, const ComplexField& u, const ScanLattice& lat) {
  check_frame(omega, lat);
  check_image(u, lat);
}

template <class T, class U>
void check_stacks(const FrameStack<T>& a, const FrameStack<U>& b) {
  if (!a.same_shape(b))
    throw DataError("stack geometry mismatch: " + std::to_string(a.frames()) + "x" +
                    std::to_string(a.side()) + " vs " + std::to_string(b.frames()) + "x" +
                    std::to_string(b.side()));
}

}  // namespace detail

/// Applies the unitary DFT (or its inverse) to every frame of a stack.
inline void dft_frames(ComplexStack& stack, Direction dir) {
  parallel_for(stack.frames(), [&](std::size_t j) {
    dft_inplace(stack.frame(j), stack.side(), stack.side(), dir);
  });
}

/// Exit waves Psi_j = omega o S_j u (no transform).
inline ComplexStack exit_waves(const ComplexField& omega, const ComplexField& u, const ScanLattice& lat) {
  detail::check_pair(omega, u, lat);
  ComplexStack psi(lat.size(), static_cast<std::size_t>(lat.frame_side));
  parallel_for(lat.size(), [&](std::size_t j) {
    auto out = psi.frame(j);
    for_each_window_pixel(lat, j, [&](std::size_t t, std::size_t i) { out[t] = omega[t] * u[i]; });
  });
  return psi;
}

/// A(omega, u)_j = F(omega o S_j u).
inline ComplexStack forward(const ComplexField& omega, const ComplexField& u, const ScanLattice& lat) {
  ComplexStack z = exit_waves(omega, u, lat);
  dft_frames(z, Direction::forward);
  return z;
}

inline RealStack magnitudes(const ComplexStack& z) {
  RealStack a(z.frames(), z.side());
  for (std::size_t i = 0; i < z.size(); ++i) a[i] = std::abs(z[i]);
  return a;
}

inline RealStack intensities(const ComplexStack& z) {
  RealStack f(z.frames(), z.side());
  for (std::size_t i = 0; i < z.size(); ++i) f[i] = std::norm(z[i]);
  return f;
}

inline RealStack sqrt_stack(const RealStack& f) {
  RealStack a(f.frames(), f.side());
  for (std::size_t i = 0; i < f.size(); ++i) a[i] = std::sqrt(f[i]);
  return a;
}

/// Per frame: F^-1(a_j o sign(F psi_j)), with sign(0) = 1.
inline ComplexStack magnitude_project(const ComplexStack& psi, const RealStack& a) {
  detail::check_stacks(psi, a);
  ComplexStack out = psi;
  parallel_for(out.frames(), [&](std::size_t j) {
    auto fr = out.frame(j);
    auto aj = a.frame(j);
    dft_inplace(fr, out.side(), out.side(), Direction::forward);
    for (std::size_t t = 0; t < fr.size(); ++t) fr[t] = aj[t] * unit_phase(fr[t]);
    dft_inplace(fr, out.side(), out.side(), Direction::inverse);
  });
  return out;
}

}  // namespace ptycho
