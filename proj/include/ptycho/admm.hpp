#pragma once

#include <cmath>
#include <optional>
#include <string>

#include "ptycho/error.hpp"
#include "ptycho/evaluation.hpp"
#include "ptycho/fft.hpp"
#include "ptycho/field.hpp"
#include "ptycho/forward.hpp"
#include "ptycho/lattice.hpp"
#include "ptycho/metrics.hpp"

namespace ptycho {

/// Safeguarded preconditioner: diag(M) = s if h <= s, else r * h, where h is
/// the peak of the corresponding overlap map.
struct Safeguard {
  double r1 = 1e-6;
  double r2 = 1e-3;
  double s1 = 1e-6;
  double s2 = 1e-6;
};

/// Settings shared by both ADMM variants.
struct AdmmCommon {
  double alpha1 = 0.0;
  double alpha2 = 0.0;
  std::optional<Safeguard> precond;  ///< nullopt: standard ADMM (M = 0)
  double c_omega = 1e8;
  double c_u = 1e8;
  int max_iters = 1000;
  double rfactor_tol = 1e-6;
  MetricSpec metric;
  int prox_inner_iters = 1;
  std::optional<double> prox_step;  ///< delta; default_prox_step when unset
};

struct SolverConfigI : AdmmCommon {
  double beta = 0.04;
};

struct SolverConfigII : AdmmCommon {
  double beta1 = 0.04;
  double beta2 = 0.4;
  double tau = 10.0;
  MetricSpec probe_metric;  ///< metric against the probe data c^2
  RealField probe_dp;       ///< c = |F omega_true|, frame-sized
};

struct SolverStateI {
  ComplexField omega;
  ComplexField u;
  ComplexStack z;
  ComplexStack lambda;
  int iter = 0;
};

struct SolverStateII {
  ComplexField omega;
  ComplexField u;
  ComplexStack z1;
  ComplexField z2;
  ComplexStack lambda1;
  ComplexField lambda2;
  int iter = 0;
};

/// Per-iteration diagnostics.
struct IterationRecord {
  int iter = 0;
  double r_factor = 0.0;
  std::optional<double> snr_u;
  std::optional<double> snr_probe;
  double aug_lagrangian = 0.0;
  double i_u = 0.0;
  double i_omega = 0.0;
  double wall_ms = 0.0;
  /// ||Lambda + grad G(z)||; zero when the z-subproblem is solved exactly.
  double multiplier_residual = 0.0;
};

inline void validate(const AdmmCommon& c) {
  validate(c.metric);
  if (c.alpha1 < 0.0 || c.alpha2 < 0.0) throw ConfigError("alpha1, alpha2 must be nonnegative");
  if (c.precond) {
    const auto& g = *c.precond;
    if (!(g.r1 > 0 && g.r2 > 0 && g.s1 > 0 && g.s2 > 0))
      throw ConfigError("safeguard parameters r1, r2, s1, s2 must be positive");
  }
  if (!(c.c_omega > 0.0) || !(c.c_u > 0.0)) throw ConfigError("amplitude caps must be positive");
  if (c.max_iters < 0) throw ConfigError("max_iters must be >= 0");
  if (c.prox_inner_iters < 1) throw ConfigError("prox inner iterations must be >= 1");
  if (c.prox_step && !(*c.prox_step > 0.0)) throw ConfigError("prox step must be positive");
}

inline void validate(const SolverConfigI& c) {
  validate(static_cast<const AdmmCommon&>(c));
  if (!(c.beta > 0.0)) throw ConfigError("beta must be positive");
}

inline void validate(const SolverConfigII& c) {
  validate(static_cast<const AdmmCommon&>(c));
  validate(c.probe_metric);
  if (!(c.beta1 > 0.0) || !(c.beta2 > 0.0)) throw ConfigError("beta1, beta2 must be positive");
  if (!(c.tau > 0.0)) throw ConfigError("tau must be positive");
  if (c.probe_dp.empty()) throw ConfigError("Model II needs probe diffraction data");
  for (double v : c.probe_dp.values())
    if (!(v >= 0.0)) throw DataError("probe diffraction magnitudes must be nonnegative");
}

/// omega0 = (1/J) F^-1(sum_j sqrt(f_j)): the mean measured magnitude given
/// zero phase and transformed back to the frame domain, with the transform
/// origin moved to the frame center (pixel (m/2, m/2)) so the initial probe
/// sits where the window illuminates.
inline ComplexField initial_probe(const RealStack& f, const ScanLattice& lat) {
  if (f.frames() != lat.size() || f.side() != static_cast<std::size_t>(lat.frame_side))
    throw DataError("intensity stack does not match the lattice");
  const std::size_t m = f.side();
  ComplexField acc(m, m);
  for (std::size_t j = 0; j < f.frames(); ++j) {
    auto fr = f.frame(j);
    for (std::size_t t = 0; t < fr.size(); ++t) acc[t] += std::sqrt(fr[t]);
  }
  const double inv_j = 1.0 / static_cast<double>(f.frames());
  for (auto& x : acc.values()) x *= inv_j;
  ComplexField w = unitary_idft(std::move(acc));
  const int h = static_cast<int>(m / 2);
  return cyclic_shift(w, -h, -h);
}

inline ComplexField initial_image(const ScanLattice& lat) {
  return ComplexField(static_cast<std::size_t>(lat.image_side), static_cast<std::size_t>(lat.image_side),
                      cplx{1.0, 0.0});
}

inline SolverStateI make_state_i(ComplexField omega, ComplexField u, const ScanLattice& lat) {
  SolverStateI s;
  s.z = forward(omega, u, lat);
  s.lambda = ComplexStack(s.z.frames(), s.z.side());
  s.omega = std::move(omega);
  s.u = std::move(u);
  return s;
}

/// u0 = 1, omega0 from the data, z0 = A(omega0, u0), Lambda0 = 0.
inline SolverStateI init_state_i(const RealStack& f, const ScanLattice& lat) {
  return make_state_i(initial_probe(f, lat), initial_image(lat), lat);
}

inline SolverStateII make_state_ii(ComplexField omega, ComplexField u, const ScanLattice& lat) {
  SolverStateII s;
  s.z1 = forward(omega, u, lat);
  s.lambda1 = ComplexStack(s.z1.frames(), s.z1.side());
  s.z2 = unitary_dft(omega);
  s.lambda2 = ComplexField(omega.rows(), omega.cols());
  s.omega = std::move(omega);
  s.u = std::move(u);
  return s;
}

inline SolverStateII init_state_ii(const RealStack& f, const ScanLattice& lat) {
  return make_state_ii(initial_probe(f, lat), initial_image(lat), lat);
}

namespace detail {

inline double safeguard_weight(double peak, double s, double r) { return peak <= s ? s : r * peak; }

inline void check_finite(std::span<const cplx> v, const char* what) {
  if (!all_finite(v)) throw DivergenceError(std::string("non-finite values in ") + what);
}

/// Probe update shared by both models:
///   omega = Proj((w1 sum_j conj(S_j u) o y_j + extra_num + a M omega) /
///                (w1 P + extra_den + a M); cap)
/// where P = sum_j |S_j u|^2. `extra_num`/`extra_den` carry the Model II
/// probe-data terms (empty/zero for Model I).
inline ComplexField probe_update(const ComplexField& omega, const ComplexField& u, const ComplexStack& y,
                                 const ScanLattice& lat, const RealField& overlap, double w1,
                                 std::span<const cplx> extra_num, double extra_den, double prox_weight,
                                 double cap) {
  const std::size_t m = omega.size();
  std::vector<cplx> num(m);
  for (std::size_t j = 0; j < lat.size(); ++j) {
    auto yj = y.frame(j);
    for_each_window_pixel(lat, j, [&](std::size_t t, std::size_t i) { num[t] += std::conj(u[i]) * yj[t]; });
  }
  ComplexField out(omega.rows(), omega.cols());
  for (std::size_t t = 0; t < m; ++t) {
    const double den = w1 * overlap[t] + extra_den + prox_weight;
    if (!(den > 0.0)) throw OverlapViolation("probe update denominator vanished: sum_j |S_j u|^2 = 0", t);
    cplx n = w1 * num[t] + prox_weight * omega[t];
    if (!extra_num.empty()) n += extra_num[t];
    out[t] = n / den;
  }
  clamp_modulus(out.span(), cap);
  return out;
}

/// u = Proj((w sum_j S_j^T(conj(omega) o y_j) + a M u) / (w Q + a M); cap), Q = sum_j S_j^T |omega|^2.
inline ComplexField image_update(const ComplexField& omega, const ComplexField& u, const ComplexStack& y,
                                 const ScanLattice& lat, const RealField& overlap, double w,
                                 double prox_weight, double cap) {
  ComplexField num(u.rows(), u.cols());
  for (std::size_t j = 0; j < lat.size(); ++j) {
    auto yj = y.frame(j);
    for_each_window_pixel(lat, j, [&](std::size_t t, std::size_t i) { num[i] += std::conj(omega[t]) * yj[t]; });
  }
  ComplexField out(u.rows(), u.cols());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double den = w * overlap[i] + prox_weight;
    if (!(den > 0.0))
      throw OverlapViolation("image update denominator vanished: sum_j S_j^T |omega|^2 = 0", i);
    out[i] = (w * num[i] + prox_weight * u[i]) / den;
  }
  clamp_modulus(out.span(), cap);
  return out;
}

/// F^-1(z + lambda / beta), frame by frame.
inline ComplexStack shifted_frames(const ComplexStack& z, const ComplexStack& lambda, double beta) {
  ComplexStack y(z.frames(), z.side());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = z[i] + lambda[i] / beta;
  dft_frames(y, Direction::inverse);
  return y;
}

/// G(z) + Re<z - Az, lambda> + beta/2 ||z - Az||^2 on flat spans.
inline double lagrangian_block(const MetricSpec& metric, std::span<const cplx> z, std::span<const cplx> az,
                               std::span<const cplx> lambda, std::span<const double> f, double beta) {
  double coupling = 0.0;
  double penalty = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const cplx r = z[i] - az[i];
    coupling += r.real() * lambda[i].real() + r.imag() * lambda[i].imag();
    penalty += std::norm(r);
  }
  return metric_value(metric, z, f) + coupling + 0.5 * beta * penalty;
}

inline double multiplier_residual(const MetricSpec& metric, std::span<const cplx> z,
                                  std::span<const cplx> lambda, std::span<const double> f) {
  std::vector<cplx> g(z.size());
  metric_gradient_into(metric, z, f, g);
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += std::norm(lambda[i] + g[i]);
  return std::sqrt(s);
}

inline void check_data_geometry(const RealStack& f, const ScanLattice& lat) {
  if (f.frames() != lat.size() || f.side() != static_cast<std::size_t>(lat.frame_side))
    throw DataError("intensity stack (" + std::to_string(f.frames()) + " frames of side " +
                    std::to_string(f.side()) + ") does not match the lattice (" +
                    std::to_string(lat.size()) + " frames of side " + std::to_string(lat.frame_side) + ")");
  metric_detail::check_data(f.span());
}

}  // namespace detail

/// Augmented Lagrangian of Model I at the given state. The indicator terms
/// vanish because iterates are always projected onto the amplitude caps.
inline double augmented_lagrangian(const SolverStateI& s, const RealStack& f, const ScanLattice& lat,
                                   const SolverConfigI& cfg) {
  const ComplexStack az = forward(s.omega, s.u, lat);
  return detail::lagrangian_block(cfg.metric, s.z.span(), az.span(), s.lambda.span(), f.span(), cfg.beta);
}

/// One iteration of the generalized ADMM for Model I: probe update, image
/// update, z-prox, multiplier ascent. Mutates `s` and returns diagnostics
/// evaluated at the new iterate.
inline IterationRecord admm_step(SolverStateI& s, const RealStack& f, const ScanLattice& lat,
                                 const SolverConfigI& cfg) {
  const double beta = cfg.beta;
  const ComplexStack y = detail::shifted_frames(s.z, s.lambda, beta);

  // Step 1: probe.
  const RealField p_overlap = probe_overlap(s.u, lat);
  double m1 = 0.0;
  if (cfg.precond) m1 = detail::safeguard_weight(max_value(p_overlap.span()), cfg.precond->s1, cfg.precond->r1);
  const double i_u = min_value(p_overlap.span()) + 2.0 * cfg.alpha1 / beta * m1;
  ComplexField omega = detail::probe_update(s.omega, s.u, y, lat, p_overlap, beta, {}, 0.0, cfg.alpha1 * m1,
                                            cfg.c_omega);

  // Step 2: image.
  const RealField i_overlap = image_overlap(omega, lat);
  double m2 = 0.0;
  if (cfg.precond) m2 = detail::safeguard_weight(max_value(i_overlap.span()), cfg.precond->s2, cfg.precond->r2);
  const double i_omega = min_value(i_overlap.span()) + 2.0 * cfg.alpha2 / beta * m2;
  ComplexField u = detail::image_update(omega, s.u, y, lat, i_overlap, beta, cfg.alpha2 * m2, cfg.c_u);

  // Step 3: z = Prox_G^beta(A(omega, u) - Lambda / beta).
  const ComplexStack az = forward(omega, u, lat);
  ComplexStack z_plus(az.frames(), az.side());
  for (std::size_t i = 0; i < az.size(); ++i) z_plus[i] = az[i] - s.lambda[i] / beta;
  const ProxConfig prox{beta, cfg.prox_inner_iters, cfg.prox_step};
  ComplexStack z(az.frames(), az.side());
  metric_prox_into(cfg.metric, prox, z_plus.span(), f.span(), s.z.span(), z.span());

  // Step 4: multiplier.
  for (std::size_t i = 0; i < az.size(); ++i) s.lambda[i] += beta * (z[i] - az[i]);

  s.omega = std::move(omega);
  s.u = std::move(u);
  s.z = std::move(z);
  ++s.iter;
  detail::check_finite(s.omega.span(), "probe");
  detail::check_finite(s.u.span(), "image");
  detail::check_finite(s.z.span(), "z");
  detail::check_finite(s.lambda.span(), "multiplier");

  IterationRecord rec;
  rec.iter = s.iter;
  rec.r_factor = r_factor(az, f);
  rec.aug_lagrangian = detail::lagrangian_block(cfg.metric, s.z.span(), az.span(), s.lambda.span(), f.span(), beta);
  rec.i_u = i_u;
  rec.i_omega = i_omega;
  rec.multiplier_residual = detail::multiplier_residual(cfg.metric, s.z.span(), s.lambda.span(), f.span());
  return rec;
}

/// Augmented Lagrangian of Model II: the Model I block in (z1, Lambda1,
/// beta1) plus tau * G_hat(z2) + Re<z2 - F omega, Lambda2> + beta2/2 ||z2 - F omega||^2.
inline double augmented_lagrangian(const SolverStateII& s, const RealStack& f, const ScanLattice& lat,
                                   const SolverConfigII& cfg) {
  const ComplexStack az = forward(s.omega, s.u, lat);
  const ComplexField fw = unitary_dft(s.omega);
  RealField c2(cfg.probe_dp.rows(), cfg.probe_dp.cols());
  for (std::size_t t = 0; t < c2.size(); ++t) c2[t] = cfg.probe_dp[t] * cfg.probe_dp[t];
  const double first = detail::lagrangian_block(cfg.metric, s.z1.span(), az.span(), s.lambda1.span(), f.span(),
                                                cfg.beta1);
  // tau scales only the metric term of the second block.
  const double second = detail::lagrangian_block(cfg.probe_metric, s.z2.span(), fw.span(), s.lambda2.span(),
                                                 c2.span(), cfg.beta2) -
                        metric_value(cfg.probe_metric, s.z2.span(), c2.span()) * (1.0 - cfg.tau);
  return first + second;
}

/// One iteration of the generalized ADMM for Model II (probe diffraction
/// data available).
inline IterationRecord admm2_step(SolverStateII& s, const RealStack& f, const ScanLattice& lat,
                                  const SolverConfigII& cfg) {
  const double b1 = cfg.beta1;
  const double b2 = cfg.beta2;
  if (!cfg.probe_dp.same_shape(s.omega)) throw DataError("probe diffraction data must be frame-sized");

  const ComplexStack y1 = detail::shifted_frames(s.z1, s.lambda1, b1);
  ComplexField y2(s.z2.rows(), s.z2.cols());
  for (std::size_t t = 0; t < y2.size(); ++t) y2[t] = s.z2[t] + s.lambda2[t] / b2;
  y2 = unitary_idft(std::move(y2));

  // Probe: the beta2 term keeps the denominator positive without overlap.
  const RealField p_overlap = probe_overlap(s.u, lat);
  double m1 = 0.0;
  if (cfg.precond) m1 = detail::safeguard_weight(max_value(p_overlap.span()), cfg.precond->s1, cfg.precond->r1);
  const double i_u = min_value(p_overlap.span()) + 2.0 * cfg.alpha1 / b1 * m1;
  std::vector<cplx> extra(y2.size());
  for (std::size_t t = 0; t < extra.size(); ++t) extra[t] = b2 * y2[t];
  ComplexField omega =
      detail::probe_update(s.omega, s.u, y1, lat, p_overlap, b1, extra, b2, cfg.alpha1 * m1, cfg.c_omega);

  const RealField i_overlap = image_overlap(omega, lat);
  double m2 = 0.0;
  if (cfg.precond) m2 = detail::safeguard_weight(max_value(i_overlap.span()), cfg.precond->s2, cfg.precond->r2);
  const double i_omega = min_value(i_overlap.span()) + 2.0 * cfg.alpha2 / b1 * m2;
  ComplexField u = detail::image_update(omega, s.u, y1, lat, i_overlap, b1, cfg.alpha2 * m2, cfg.c_u);

  // z1 = Prox_G^beta1(A - Lambda1/beta1), z2 = Prox_Ghat^(beta2/tau)(F omega - Lambda2/beta2).
  const ComplexStack az = forward(omega, u, lat);
  ComplexStack z1_plus(az.frames(), az.side());
  for (std::size_t i = 0; i < az.size(); ++i) z1_plus[i] = az[i] - s.lambda1[i] / b1;
  ComplexStack z1(az.frames(), az.side());
  metric_prox_into(cfg.metric, ProxConfig{b1, cfg.prox_inner_iters, cfg.prox_step}, z1_plus.span(), f.span(),
                   s.z1.span(), z1.span());

  const ComplexField fw = unitary_dft(omega);
  ComplexField z2_plus(fw.rows(), fw.cols());
  for (std::size_t t = 0; t < fw.size(); ++t) z2_plus[t] = fw[t] - s.lambda2[t] / b2;
  RealField c2(cfg.probe_dp.rows(), cfg.probe_dp.cols());
  for (std::size_t t = 0; t < c2.size(); ++t) c2[t] = cfg.probe_dp[t] * cfg.probe_dp[t];
  ComplexField z2(fw.rows(), fw.cols());
  metric_prox_into(cfg.probe_metric, ProxConfig{b2 / cfg.tau, cfg.prox_inner_iters, cfg.prox_step},
                   z2_plus.span(), c2.span(), s.z2.span(), z2.span());

  for (std::size_t i = 0; i < az.size(); ++i) s.lambda1[i] += b1 * (z1[i] - az[i]);
  for (std::size_t t = 0; t < fw.size(); ++t) s.lambda2[t] += b2 * (z2[t] - fw[t]);

  s.omega = std::move(omega);
  s.u = std::move(u);
  s.z1 = std::move(z1);
  s.z2 = std::move(z2);
  ++s.iter;
  detail::check_finite(s.omega.span(), "probe");
  detail::check_finite(s.u.span(), "image");
  detail::check_finite(s.z1.span(), "z1");
  detail::check_finite(s.lambda1.span(), "multiplier");

  IterationRecord rec;
  rec.iter = s.iter;
  rec.r_factor = r_factor(az, f);
  rec.aug_lagrangian = augmented_lagrangian(s, f, lat, cfg);
  rec.i_u = i_u;
  rec.i_omega = i_omega;
  rec.multiplier_residual = detail::multiplier_residual(cfg.metric, s.z1.span(), s.lambda1.span(), f.span());
  return rec;
}

}  // namespace ptycho
