#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>

#include "ptycho/error.hpp"
#include "ptycho/field.hpp"
#include "ptycho/forward.hpp"
#include "ptycho/lattice.hpp"

namespace ptycho {

enum class PhantomStyle { complex_pair, real };
enum class ProbeStyle { disk_defocus, asymmetric };

inline PhantomStyle parse_phantom_style(std::string_view s) {
  if (s == "complex_pair") return PhantomStyle::complex_pair;
  if (s == "real") return PhantomStyle::real;
  throw ConfigError("unknown phantom style '" + std::string(s) + "' (expected complex_pair|real)");
}

inline ProbeStyle parse_probe_style(std::string_view s) {
  if (s == "disk_defocus") return ProbeStyle::disk_defocus;
  if (s == "asymmetric") return ProbeStyle::asymmetric;
  throw ConfigError("unknown probe style '" + std::string(s) + "' (expected disk_defocus|asymmetric)");
}

inline std::string_view to_string(PhantomStyle s) { return s == PhantomStyle::real ? "real" : "complex_pair"; }
inline std::string_view to_string(ProbeStyle s) { return s == ProbeStyle::asymmetric ? "asymmetric" : "disk_defocus"; }

namespace harness_detail {

inline double blob(double x, double y, double cx, double cy, double w) {
  const double dx = x - cx;
  const double dy = y - cy;
  return std::exp(-(dx * dx + dy * dy) / (2.0 * w * w));
}

}  // namespace harness_detail

/// Synthetic test image with magnitudes in [0.2, 1]. The magnitude is a few
/// off-center Gaussian bumps over a ripple; the phase (complex_pair only) is
/// a different smooth pattern scaled into [-pi/2, pi/2].
inline ComplexField make_phantom(int image_side, PhantomStyle style) {
  if (image_side < 1) throw ConfigError("image_side must be positive");
  using harness_detail::blob;
  const auto n = static_cast<std::size_t>(image_side);
  ComplexField u(n, n);
  const double pi = std::numbers::pi;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const double y = (static_cast<double>(r) + 0.5) / static_cast<double>(n);
      const double x = (static_cast<double>(c) + 0.5) / static_cast<double>(n);
      double m = 0.45 * blob(x, y, 0.30, 0.35, 0.12) + 0.35 * blob(x, y, 0.70, 0.60, 0.08) +
                 0.25 * blob(x, y, 0.55, 0.20, 0.05) + 0.10 * std::sin(2 * pi * (2 * x + y)) *
                                                           std::cos(2 * pi * 3 * y);
      m = std::clamp(0.35 + m, 0.2, 1.0);
      double phase = 0.0;
      if (style == PhantomStyle::complex_pair) {
        const double p = 0.8 * blob(x, y, 0.60, 0.40, 0.15) - 0.6 * blob(x, y, 0.25, 0.75, 0.10) +
                         0.2 * std::sin(2 * pi * (x - 2 * y));
        phase = 0.5 * pi * std::clamp(p, -1.0, 1.0);
      }
      u(r, c) = std::polar(m, phase);
    }
  }
  return u;
}

/// Disk probe of radius 0.4 * frame_side with a quadratic (defocus) phase.
/// The asymmetric style multiplies in an off-center elliptical taper.
inline ComplexField make_probe(int frame_side, ProbeStyle style, double amplitude = 1.0) {
  if (frame_side < 1) throw ConfigError("frame_side must be positive");
  if (!(amplitude > 0.0)) throw ConfigError("probe amplitude must be positive");
  const auto m = static_cast<std::size_t>(frame_side);
  const double center = 0.5 * (static_cast<double>(m) - 1.0);
  const double radius = 0.4 * static_cast<double>(m);
  ComplexField w(m, m);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < m; ++c) {
      const double dy = static_cast<double>(r) - center;
      const double dx = static_cast<double>(c) - center;
      const double rho2 = (dx * dx + dy * dy) / (radius * radius);
      if (rho2 > 1.0) continue;
      double amp = amplitude;
      if (style == ProbeStyle::asymmetric) {
        const double ex = (dx - 0.15 * radius) / (0.9 * radius);
        const double ey = (dy + 0.10 * radius) / (0.55 * radius);
        amp *= 0.3 + 0.7 * std::exp(-(ex * ex + ey * ey));
      }
      w(r, c) = std::polar(amp, 0.5 * std::numbers::pi * rho2);
    }
  }
  return w;
}

struct NoiseSpec {
  double eta = 1.0;
  std::uint64_t seed = 0;
};

inline void validate(const NoiseSpec& s) {
  if (!(s.eta > 0.0)) throw ConfigError("noise peak factor eta must be positive");
}

namespace detail {

/// Uniform double in [0, 1) from the top 53 bits; identical on every platform.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Exact Poisson sampler: inversion below mean 30, transformed rejection
/// with squeeze (PTRS) above.
inline double sample_poisson(double mean, std::mt19937_64& rng) {
  if (!(mean > 0.0)) return 0.0;
  if (mean < 30.0) {
    double p = std::exp(-mean);
    double cdf = p;
    const double u = uniform01(rng);
    double k = 0.0;
    while (u > cdf) {
      k += 1.0;
      p *= mean / k;
      const double next = cdf + p;
      if (next == cdf) break;  // tail mass below double resolution
      cdf = next;
    }
    return k;
  }
  const double smu = std::sqrt(mean);
  const double b = 0.931 + 2.53 * smu;
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2.0);
  const double log_mean = std::log(mean);
  for (;;) {
    const double u = uniform01(rng) - 0.5;
    const double v = uniform01(rng);
    const double us = 0.5 - std::abs(u);
    const double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
    if (us >= 0.07 && v <= vr) return k;
    if (k < 0.0 || (us < 0.013 && v > us)) continue;
    if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
        -mean + k * log_mean - std::lgamma(k + 1.0))
      return k;
  }
}

}  // namespace detail

/// Clean magnitudes a^eta = |A(omega, eta * u)|.
inline RealStack clean_magnitudes(const ComplexField& omega, const ComplexField& u, const ScanLattice& lat,
                                  double eta) {
  ComplexField scaled = u;
  for (auto& x : scaled.values()) x *= eta;
  return magnitudes(forward(omega, scaled, lat));
}

/// Poisson counts with means (a^eta)^2, drawn in stack order from one
/// mt19937_64 stream seeded with spec.seed.
inline RealStack simulate_poisson(const ComplexField& omega, const ComplexField& u, const ScanLattice& lat,
                                  const NoiseSpec& spec) {
  validate(spec);
  const RealStack a = clean_magnitudes(omega, u, lat, spec.eta);
  RealStack f(a.frames(), a.side());
  std::mt19937_64 rng(spec.seed);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = detail::sample_poisson(a[i] * a[i], rng);
  return f;
}

/// Periodic multiplicative pair with p1 o S_j p2 = 1 for every frame of a
/// square lattice: p2 alternates 1 and 2 in a checkerboard of the given
/// period, p1 is the reciprocal of its first window.
struct AmbiguityPair {
  ComplexField p1;  ///< frame-sized
  ComplexField p2;  ///< image-sized
};

inline AmbiguityPair make_ambiguity_pair(const ScanLattice& lat, int period) {
  if (lat.kind != LatticeKind::square) throw ConfigError("ambiguity pair needs a square lattice");
  if (period < 2) throw ConfigError("ambiguity period must be >= 2");
  if (lat.dist % period != 0)
    throw ConfigError("ambiguity period " + std::to_string(period) + " does not divide dist " +
                      std::to_string(lat.dist));
  const auto n = static_cast<std::size_t>(lat.image_side);
  ComplexField p2(n, n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      const auto pr = r % static_cast<std::size_t>(period);
      const auto pc = c % static_cast<std::size_t>(period);
      p2(r, c) = ((pr + pc) % 2 == 0) ? 1.0 : 2.0;
    }
  ComplexField p1 = extract_frame(p2, lat, 0);
  for (auto& x : p1.values()) x = 1.0 / x;
  return {std::move(p1), std::move(p2)};
}

/// A complete simulated experiment.
struct Dataset {
  ScanLattice lattice;
  ComplexField omega_true;
  ComplexField u_true;
  RealStack clean;  ///< a^eta
  RealStack f;      ///< measured intensities
  std::optional<NoiseSpec> noise;
};

struct DatasetSpec {
  int image_side = 64;
  int frame_side = 16;
  int dist = 4;
  LatticeKind lattice = LatticeKind::random;
  std::uint64_t lattice_seed = 1;
  PhantomStyle phantom = PhantomStyle::complex_pair;
  ProbeStyle probe = ProbeStyle::disk_defocus;
  double probe_amplitude = 10.0;
  std::optional<NoiseSpec> noise;  ///< nullopt: f = (a^1)^2 exactly
};

inline Dataset make_dataset(const DatasetSpec& spec) {
  Dataset d;
  d.lattice = make_lattice(spec.lattice, spec.image_side, spec.frame_side, spec.dist, spec.lattice_seed);
  d.omega_true = make_probe(spec.frame_side, spec.probe, spec.probe_amplitude);
  d.u_true = make_phantom(spec.image_side, spec.phantom);
  d.noise = spec.noise;
  const double eta = spec.noise ? spec.noise->eta : 1.0;
  d.clean = clean_magnitudes(d.omega_true, d.u_true, d.lattice, eta);
  if (spec.noise) {
    d.f = simulate_poisson(d.omega_true, d.u_true, d.lattice, *spec.noise);
  } else {
    d.f = RealStack(d.clean.frames(), d.clean.side());
    for (std::size_t i = 0; i < d.f.size(); ++i) d.f[i] = d.clean[i] * d.clean[i];
  }
  return d;
}

/// The desk-scale geometry used by the acceptance suite: 64x64 image,
/// 16x16 probe, dist 4 (J = 256).
inline DatasetSpec desk_spec(LatticeKind kind = LatticeKind::random) {
  DatasetSpec s;
  s.lattice = kind;
  return s;
}

}  // namespace ptycho
