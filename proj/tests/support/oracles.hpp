#pragma once

// Slow, independent reference implementations. Nothing here calls into the
// library's numerical kernels; only the container types are shared.

#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "ptycho/field.hpp"
#include "ptycho/lattice.hpp"
#include "ptycho/metrics.hpp"

namespace oracle {

using ptycho::cplx;
using ptycho::ComplexField;
using ptycho::ComplexStack;
using ptycho::Metric;
using ptycho::MetricSpec;
using ptycho::RealField;
using ptycho::RealStack;
using ptycho::ScanLattice;

/// Direct O(N^2) unitary DFT of a rows x cols block.
inline ComplexField naive_dft(const ComplexField& x, bool inverse = false) {
  const auto R = x.rows();
  const auto C = x.cols();
  const double sign = inverse ? 1.0 : -1.0;
  ComplexField out(R, C);
  for (std::size_t k = 0; k < R; ++k)
    for (std::size_t l = 0; l < C; ++l) {
      cplx s{};
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) {
          const double ang = sign * 2.0 * std::numbers::pi *
                             (static_cast<double>(k * r) / R + static_cast<double>(l * c) / C);
          s += x(r, c) * std::polar(1.0, ang);
        }
      out(k, l) = s / std::sqrt(static_cast<double>(R * C));
    }
  return out;
}

/// S_j u by explicit modular indexing.
inline ComplexField window(const ComplexField& u, const ScanLattice& lat, std::size_t j) {
  const int n = lat.image_side;
  const int m = lat.frame_side;
  ComplexField out(m, m);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < m; ++c)
      out(r, c) = u((lat.positions[j].row + r) % n, (lat.positions[j].col + c) % n);
  return out;
}

inline ComplexStack forward(const ComplexField& omega, const ComplexField& u, const ScanLattice& lat) {
  const auto m = static_cast<std::size_t>(lat.frame_side);
  ComplexStack z(lat.size(), m);
  for (std::size_t j = 0; j < lat.size(); ++j) {
    ComplexField w = window(u, lat, j);
    for (std::size_t t = 0; t < w.size(); ++t) w[t] *= omega[t];
    const ComplexField fw = naive_dft(w);
    for (std::size_t t = 0; t < fw.size(); ++t) z.frame(j)[t] = fw[t];
  }
  return z;
}

/// probe_overlap(t) = sum_j |u(p_j + t)|^2 and image_overlap(i) =
/// sum over (j, t) with p_j + t = i of |omega(t)|^2, by enumeration.
inline std::pair<RealField, RealField> overlap_maps(const ComplexField& omega, const ComplexField& u,
                                                    const ScanLattice& lat) {
  const int n = lat.image_side;
  const int m = lat.frame_side;
  RealField img(n, n);
  RealField prb(m, m);
  for (std::size_t j = 0; j < lat.size(); ++j)
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < m; ++c) {
        const int ir = (lat.positions[j].row + r) % n;
        const int ic = (lat.positions[j].col + c) % n;
        prb(r, c) += std::norm(u(ir, ic));
        img(ir, ic) += std::norm(omega(r, c));
      }
  return {img, prb};
}

/// Metric value per element, written out from the definitions.
inline double metric_value(const MetricSpec& s, cplx z, double f) {
  const double g = std::norm(z);
  const double e = s.epsilon;
  switch (s.kind) {
    case Metric::pagm: return 0.5 * std::pow(std::sqrt(g + e) - std::sqrt(f + e), 2);
    case Metric::pipm: return 0.5 * (g + e - (f + e) * std::log(g + e));
    case Metric::igm: return 0.5 * (g - f) * (g - f);
    case Metric::wigm: return 0.5 * (g - f) * (g - f) / (f + e);
  }
  return 0.0;
}

inline double metric_total(const MetricSpec& s, std::span<const cplx> z, std::span<const double> f) {
  double acc = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) acc += metric_value(s, z[i], f[i]);
  return acc;
}

/// Central difference of a real function of one complex variable, returned
/// as d/dRe + i d/dIm.
inline cplx fd_gradient(const std::function<double(cplx)>& fn, cplx z, double h) {
  const double dre = (fn(z + cplx{h, 0}) - fn(z - cplx{h, 0})) / (2 * h);
  const double dim = (fn(z + cplx{0, h}) - fn(z - cplx{0, h})) / (2 * h);
  return {dre, dim};
}

/// Minimizer over x >= 0 of B(x^2, f) + beta/2 (x - zmag)^2: dense grid at
/// step 1e-4 over [0, zmag + sqrt(f) + 10], then trisection to 1e-9 around
/// the best grid point.
inline double prox_radius(const MetricSpec& s, double beta, double zmag, double f, double grid = 1e-4) {
  auto phi = [&](double x) { return metric_value(s, cplx{x, 0.0}, f) + 0.5 * beta * (x - zmag) * (x - zmag); };
  const double hi = zmag + std::sqrt(f) + 10.0;
  const auto steps = static_cast<std::size_t>(std::ceil(hi / grid));
  double best_x = 0.0;
  double best = phi(0.0);
  for (std::size_t i = 1; i <= steps; ++i) {
    const double x = static_cast<double>(i) * grid;
    const double v = phi(x);
    if (v < best) {
      best = v;
      best_x = x;
    }
  }
  double a = std::max(0.0, best_x - grid);
  double b = best_x + grid;
  while (b - a > 1e-9) {
    const double m1 = a + (b - a) / 3.0;
    const double m2 = b - (b - a) / 3.0;
    if (phi(m1) <= phi(m2)) b = m2;
    else a = m1;
  }
  return 0.5 * (a + b);
}

struct SnrSearch {
  double db = 0.0;
  int shift_row = 0;
  int shift_col = 0;
  cplx zeta;
  double residual = 0.0;
};

/// Every cyclic translation, closed-form zeta, smallest residual; ties go to
/// the first shift in row-major order.
inline SnrSearch snr_bruteforce(const ComplexField& rec, const ComplexField& truth) {
  const int R = static_cast<int>(rec.rows());
  const int C = static_cast<int>(rec.cols());
  SnrSearch best;
  best.residual = std::numeric_limits<double>::infinity();
  for (int dr = 0; dr < R; ++dr)
    for (int dc = 0; dc < C; ++dc) {
      cplx num{};
      double den = 0.0;
      for (int r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c) {
          const cplx v = rec((r + dr) % R, (c + dc) % C);
          num += truth(r, c) * std::conj(v);
          den += std::norm(v);
        }
      const cplx zeta = num / den;
      double res = 0.0;
      for (int r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c) res += std::norm(zeta * rec((r + dr) % R, (c + dc) % C) - truth(r, c));
      if (res < best.residual) {
        double sig = 0.0;
        for (const auto& x : rec.values()) sig += std::norm(zeta * x);
        best = {-10.0 * std::log10(res / sig), dr, dc, zeta, res};
      }
    }
  return best;
}

inline ComplexField random_field(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  ComplexField out(rows, cols);
  for (auto& x : out.values()) x = {n(rng), n(rng)};
  return out;
}

inline double rel_diff(std::span<const cplx> a, std::span<const cplx> b) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += std::norm(a[i] - b[i]);
    den += std::norm(b[i]);
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace oracle
