#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ptycho/admm.hpp"
#include "ptycho/error.hpp"
#include "ptycho/evaluation.hpp"
#include "ptycho/fft.hpp"
#include "ptycho/field.hpp"
#include "ptycho/forward.hpp"
#include "ptycho/lattice.hpp"
#include "ptycho/metrics.hpp"

namespace ptycho {

enum class BaselineAlgorithm { epie, dr, palm };

/// How the PALM stepsizes are interpreted. `adaptive` divides palm_tau1 by
/// ||sum_j |S_j u|^2||_inf and palm_tau2 by ||sum_j S_j^T |omega|^2||_inf at
/// every iteration; `fixed` uses them verbatim.
enum class PalmStepRule { adaptive, fixed };

struct BaselineConfig {
  BaselineAlgorithm algorithm = BaselineAlgorithm::epie;
  double d1 = 1.0;
  double d2 = 1.0;
  int dr_inner_T = 2;
  double palm_tau1 = 1.0;
  double palm_tau2 = 1.0;
  PalmStepRule palm_steps = PalmStepRule::adaptive;
  std::uint64_t seed = 0;
  MetricSpec metric;  ///< PALM objective; also the value recorded for every baseline
  double c_omega = 1e8;
  double c_u = 1e8;
};

inline void validate(const BaselineConfig& c) {
  validate(c.metric);
  if (!(c.d1 > 0.0) || !(c.d2 > 0.0)) throw ConfigError("ePIE steps d1, d2 must be positive");
  if (c.dr_inner_T < 1) throw ConfigError("DR inner alternations must be >= 1");
  if (!(c.palm_tau1 > 0.0) || !(c.palm_tau2 > 0.0)) throw ConfigError("PALM stepsizes must be positive");
  if (!(c.c_omega > 0.0) || !(c.c_u > 0.0)) throw ConfigError("amplitude caps must be positive");
}

struct BaselineState {
  ComplexField omega;
  ComplexField u;
  ComplexStack psi;  ///< DR only
  int iter = 0;
  std::mt19937_64 rng;  ///< ePIE frame order
};

inline BaselineState make_baseline_state(ComplexField omega, ComplexField u, const ScanLattice& lat,
                                         const BaselineConfig& cfg) {
  BaselineState s;
  if (cfg.algorithm == BaselineAlgorithm::dr) s.psi = exit_waves(omega, u, lat);
  s.omega = std::move(omega);
  s.u = std::move(u);
  s.rng.seed(cfg.seed);
  return s;
}

namespace detail {

inline constexpr double kBlowUp = 1e12;

inline IterationRecord baseline_record(const BaselineState& s, const RealStack& f, const ScanLattice& lat,
                                       const MetricSpec& metric) {
  const ComplexStack az = forward(s.omega, s.u, lat);
  IterationRecord rec;
  rec.iter = s.iter;
  rec.r_factor = r_factor(az, f);
  rec.aug_lagrangian = metric_value(metric, az.span(), f.span());
  rec.i_u = min_value(probe_overlap(s.u, lat).span());
  rec.i_omega = min_value(image_overlap(s.omega, lat).span());
  return rec;
}

inline void check_blow_up(const BaselineState& s, const char* who) {
  check_finite(s.omega.span(), "probe");
  check_finite(s.u.span(), "image");
  if (max_abs(s.omega.span()) > kBlowUp || max_abs(s.u.span()) > kBlowUp)
    throw DivergenceError(std::string(who) + " iterates exceeded 1e12");
}

/// F^-1(a o sign(F psi)) for a single frame, in place.
inline void project_frame(std::span<cplx> psi, std::span<const double> a, std::size_t side) {
  dft_inplace(psi, side, side, Direction::forward);
  for (std::size_t t = 0; t < psi.size(); ++t) psi[t] = a[t] * unit_phase(psi[t]);
  dft_inplace(psi, side, side, Direction::inverse);
}

}  // namespace detail

/// One ePIE cycle: every frame visited once in a seeded random order. Each
/// visit updates omega and u in parallel from the same old iterates.
inline IterationRecord epie_step(BaselineState& s, const RealStack& a, const RealStack& f, const ScanLattice& lat,
                                 const BaselineConfig& cfg) {
  detail::check_pair(s.omega, s.u, lat);
  detail::check_stacks(a, f);
  const std::size_t J = lat.size();
  const std::size_t m = static_cast<std::size_t>(lat.frame_side);
  std::vector<std::size_t> order(J);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = J - 1; i > 0; --i) std::swap(order[i], order[s.rng() % (i + 1)]);

  std::vector<cplx> su(m * m);
  std::vector<cplx> diff(m * m);
  for (std::size_t n : order) {
    extract_frame_into<cplx>(s.u, lat, n, su);
    for (std::size_t t = 0; t < su.size(); ++t) diff[t] = s.omega[t] * su[t];
    std::vector<cplx> proj = diff;
    detail::project_frame(proj, a.frame(n), m);
    for (std::size_t t = 0; t < diff.size(); ++t) diff[t] -= proj[t];

    const double nu = max_abs(su);
    const double nw = max_abs(s.omega.span());
    if (!(nu > 0.0) || !(nw > 0.0))
      throw DataError("ePIE step is undefined: probe or image window is identically zero");
    const double step_w = cfg.d2 / (nu * nu);
    const double step_u = cfg.d1 / (nw * nw);
    // Image first, so it sees the old probe.
    for_each_window_pixel(lat, n, [&](std::size_t t, std::size_t i) {
      s.u[i] -= step_u * std::conj(s.omega[t]) * diff[t];
    });
    for (std::size_t t = 0; t < su.size(); ++t) s.omega[t] -= step_w * std::conj(su[t]) * diff[t];
  }
  ++s.iter;
  detail::check_blow_up(s, "ePIE");
  return detail::baseline_record(s, f, lat, cfg.metric);
}

/// One DR iteration: T alternating least-squares sweeps for (omega, u)
/// against Psi, then Psi <- Psi + P1(2 Psi_hat - Psi) - Psi_hat.
inline IterationRecord dr_step(BaselineState& s, const RealStack& a, const RealStack& f, const ScanLattice& lat,
                               const BaselineConfig& cfg) {
  detail::check_pair(s.omega, s.u, lat);
  detail::check_stacks(a, f);
  detail::check_stacks(s.psi, a);
  constexpr double kNoCap = std::numeric_limits<double>::infinity();
  for (int l = 0; l < cfg.dr_inner_T; ++l) {
    const RealField p = probe_overlap(s.u, lat);
    s.omega = detail::probe_update(s.omega, s.u, s.psi, lat, p, 1.0, {}, 0.0, 0.0, kNoCap);
    const RealField q = image_overlap(s.omega, lat);
    s.u = detail::image_update(s.omega, s.u, s.psi, lat, q, 1.0, 0.0, kNoCap);
  }
  const ComplexStack psi_hat = exit_waves(s.omega, s.u, lat);
  ComplexStack reflected(psi_hat.frames(), psi_hat.side());
  for (std::size_t i = 0; i < reflected.size(); ++i) reflected[i] = 2.0 * psi_hat[i] - s.psi[i];
  const ComplexStack projected = magnitude_project(reflected, a);
  for (std::size_t i = 0; i < s.psi.size(); ++i) s.psi[i] += projected[i] - psi_hat[i];
  ++s.iter;
  detail::check_finite(s.psi.span(), "DR exit waves");
  detail::check_blow_up(s, "DR");
  return detail::baseline_record(s, f, lat, cfg.metric);
}

/// Gradients of G(A(omega, u)) with respect to omega and u:
///   grad_omega = sum_j conj(S_j u) o F^-1(grad_z G_j)
///   grad_u     = sum_j S_j^T(conj(omega) o F^-1(grad_z G_j))
struct PalmGradients {
  ComplexField omega;
  ComplexField u;
};

inline ComplexStack backprojected_gradient(const MetricSpec& metric, const ComplexField& omega,
                                           const ComplexField& u, const RealStack& f, const ScanLattice& lat) {
  const ComplexStack az = forward(omega, u, lat);
  detail::check_stacks(az, f);
  ComplexStack g(az.frames(), az.side());
  metric_gradient_into(metric, az.span(), f.span(), g.span());
  dft_frames(g, Direction::inverse);
  return g;
}

inline ComplexField gradient_omega(const MetricSpec& metric, const ComplexField& omega, const ComplexField& u,
                                   const RealStack& f, const ScanLattice& lat) {
  const ComplexStack g = backprojected_gradient(metric, omega, u, f, lat);
  ComplexField out(omega.rows(), omega.cols());
  for (std::size_t j = 0; j < lat.size(); ++j) {
    auto gj = g.frame(j);
    for_each_window_pixel(lat, j, [&](std::size_t t, std::size_t i) { out[t] += std::conj(u[i]) * gj[t]; });
  }
  return out;
}

inline ComplexField gradient_u(const MetricSpec& metric, const ComplexField& omega, const ComplexField& u,
                               const RealStack& f, const ScanLattice& lat) {
  const ComplexStack g = backprojected_gradient(metric, omega, u, f, lat);
  ComplexField out(u.rows(), u.cols());
  for (std::size_t j = 0; j < lat.size(); ++j) {
    auto gj = g.frame(j);
    for_each_window_pixel(lat, j, [&](std::size_t t, std::size_t i) { out[i] += std::conj(omega[t]) * gj[t]; });
  }
  return out;
}

inline PalmGradients palm_gradients(const MetricSpec& metric, const ComplexField& omega, const ComplexField& u,
                                    const RealStack& f, const ScanLattice& lat) {
  return {gradient_omega(metric, omega, u, f, lat), gradient_u(metric, omega, u, f, lat)};
}

/// One PALM iteration: projected gradient step in omega, then in u at the
/// new omega.
inline IterationRecord palm_step(BaselineState& s, const RealStack& f, const ScanLattice& lat,
                                 const BaselineConfig& cfg) {
  detail::check_pair(s.omega, s.u, lat);
  double tau1 = cfg.palm_tau1;
  if (cfg.palm_steps == PalmStepRule::adaptive) {
    const double h = max_value(probe_overlap(s.u, lat).span());
    if (!(h > 0.0)) throw OverlapViolation("PALM step undefined: image is identically zero", 0);
    tau1 /= h;
  }
  const ComplexField gw = gradient_omega(cfg.metric, s.omega, s.u, f, lat);
  for (std::size_t t = 0; t < gw.size(); ++t) s.omega[t] -= tau1 * gw[t];
  clamp_modulus(s.omega.span(), cfg.c_omega);

  double tau2 = cfg.palm_tau2;
  if (cfg.palm_steps == PalmStepRule::adaptive) {
    const double h = max_value(image_overlap(s.omega, lat).span());
    if (!(h > 0.0)) throw OverlapViolation("PALM step undefined: probe is identically zero", 0);
    tau2 /= h;
  }
  const ComplexField gu = gradient_u(cfg.metric, s.omega, s.u, f, lat);
  for (std::size_t i = 0; i < gu.size(); ++i) s.u[i] -= tau2 * gu[i];
  clamp_modulus(s.u.span(), cfg.c_u);

  ++s.iter;
  detail::check_blow_up(s, "PALM");
  return detail::baseline_record(s, f, lat, cfg.metric);
}

}  // namespace ptycho
