#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "ptycho/error.hpp"
#include "ptycho/field.hpp"
#include "ptycho/forward.hpp"

namespace ptycho {

/// Data-fidelity metric B(|z|^2, f).
///   pagm: 1/2 || sqrt(|z|^2+eps) - sqrt(f+eps) ||^2
///   pipm: 1/2 < |z|^2+eps - (f+eps) log(|z|^2+eps), 1 >
///   igm:  1/2 || |z|^2 - f ||^2
///   wigm: 1/2 || (|z|^2 - f) / sqrt(f+eps) ||^2
enum class Metric { pagm, pipm, igm, wigm };

inline std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::pagm: return "pagm";
    case Metric::pipm: return "pipm";
    case Metric::igm: return "igm";
    case Metric::wigm: return "wigm";
  }
  return "pagm";
}

inline Metric parse_metric(std::string_view s) {
  if (s == "pagm") return Metric::pagm;
  if (s == "pipm") return Metric::pipm;
  if (s == "igm") return Metric::igm;
  if (s == "wigm") return Metric::wigm;
  throw ConfigError("unknown metric '" + std::string(s) + "' (expected pagm|pipm|igm|wigm)");
}

struct MetricSpec {
  Metric kind = Metric::pagm;
  double epsilon = 0.0;  ///< penalization; ignored by igm
};

inline void validate(const MetricSpec& spec) {
  if (spec.kind != Metric::igm && !(spec.epsilon > 0.0))
    throw ConfigError("metric " + std::string(to_string(spec.kind)) + " needs epsilon > 0");
}

/// Settings for the radial inner iterations of the z-subproblem.
struct ProxConfig {
  double beta = 1.0;
  int inner_iters = 1;
  std::optional<double> step;  ///< delta; see default_prox_step

  double effective_step(Metric m) const;
};

/// 1/(1+beta) for pagm. pipm uses half of that: near x = 0 its radial
/// gradient is of size (f+eps)/eps, and the full step then overshoots and
/// can settle into a 2-cycle instead of converging.
inline double default_prox_step(Metric m, double beta) {
  return (m == Metric::pipm ? 0.5 : 1.0) / (1.0 + beta);
}

inline double ProxConfig::effective_step(Metric m) const { return step.value_or(default_prox_step(m, beta)); }

inline void validate(const ProxConfig& cfg) {
  if (!(cfg.beta > 0.0)) throw ConfigError("prox beta must be positive");
  if (cfg.inner_iters < 1) throw ConfigError("prox inner_iters must be >= 1");
  if (cfg.step && !(*cfg.step > 0.0)) throw ConfigError("prox step must be positive");
}

/// 1e-8 * max(f), the penalization used throughout the experiments.
inline double default_epsilon(std::span<const double> f) {
  const double peak = max_value(f);
  if (!(peak > 0.0)) throw DataError("intensity data is identically zero");
  return 1e-8 * peak;
}

namespace metric_detail {

inline double value(const MetricSpec& s, double r2, double f) {
  const double e = s.epsilon;
  switch (s.kind) {
    case Metric::pagm: {
      const double d = std::sqrt(r2 + e) - std::sqrt(f + e);
      return 0.5 * d * d;
    }
    case Metric::pipm: return 0.5 * (r2 + e - (f + e) * std::log(r2 + e));
    case Metric::igm: return 0.5 * (r2 - f) * (r2 - f);
    case Metric::wigm: return 0.5 * (r2 - f) * (r2 - f) / (f + e);
  }
  return 0.0;
}

/// grad G(z) = factor(|z|^2) * z. Equivalently h'(x) = factor(x^2) * x for
/// the radial profile h(x) = B(x^2, f).
inline double grad_factor(const MetricSpec& s, double r2, double f) {
  const double e = s.epsilon;
  switch (s.kind) {
    case Metric::pagm: return 1.0 - std::sqrt(f + e) / std::sqrt(r2 + e);
    case Metric::pipm: return 1.0 - (f + e) / (r2 + e);
    case Metric::igm: return 2.0 * (r2 - f);
    case Metric::wigm: return 2.0 * (r2 - f) / (f + e);
  }
  return 0.0;
}

/// h''(x) for the quartic metrics (igm, wigm).
inline double quartic_curvature(const MetricSpec& s, double x, double f) {
  const double w = s.kind == Metric::wigm ? f + s.epsilon : 1.0;
  return (6.0 * x * x - 2.0 * f) / w;
}

inline void check_data(std::span<const double> f) {
  for (double v : f)
    if (!(v >= 0.0)) throw DataError("intensity data must be nonnegative and finite");
}

}  // namespace metric_detail

inline double metric_value(const MetricSpec& spec, std::span<const cplx> z, std::span<const double> f) {
  if (z.size() != f.size()) throw DataError("metric_value: size mismatch");
  metric_detail::check_data(f);
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += metric_detail::value(spec, std::norm(z[i]), f[i]);
  return s;
}

inline double metric_value(const MetricSpec& spec, const ComplexStack& z, const RealStack& f) {
  detail::check_stacks(z, f);
  return metric_value(spec, z.span(), f.span());
}

inline void metric_gradient_into(const MetricSpec& spec, std::span<const cplx> z,
                                 std::span<const double> f, std::span<cplx> out) {
  for (std::size_t i = 0; i < z.size(); ++i)
    out[i] = metric_detail::grad_factor(spec, std::norm(z[i]), f[i]) * z[i];
}

inline ComplexStack metric_gradient(const MetricSpec& spec, const ComplexStack& z, const RealStack& f) {
  detail::check_stacks(z, f);
  metric_detail::check_data(f.span());
  ComplexStack g(z.frames(), z.side());
  metric_gradient_into(spec, z.span(), f.span(), g.span());
  return g;
}

/// Global Lipschitz constant of grad G. Only pagm and pipm have one.
inline double lipschitz_bound(const MetricSpec& spec, std::span<const double> f) {
  metric_detail::check_data(f);
  const double peak = max_value(f) + spec.epsilon;
  switch (spec.kind) {
    case Metric::pagm: return 1.0 + 2.0 / std::sqrt(spec.epsilon) * std::sqrt(peak);
    case Metric::pipm: return 1.0 + 2.0 / spec.epsilon * peak;
    default:
      throw ConfigError("no global Lipschitz bound is available for metric " +
                        std::string(to_string(spec.kind)));
  }
}

inline double lipschitz_bound(const MetricSpec& spec, const RealStack& f) {
  return lipschitz_bound(spec, f.span());
}

/// Approximate minimizer over x >= 0 of h(x) + beta/2 (x - zmag)^2 where
/// h(x) = B(x^2, f), started from x0.
///
/// pagm/pipm use the projected gradient recursion
///   x <- max(0, x - delta * ((1 + beta - c(x)) x - beta zmag)).
/// igm/wigm have unbounded curvature, so a fixed delta is unstable for large
/// x; they take projected Newton steps with the curvature clipped below at
/// beta, which is a monotone scheme on the convex branch of the radial
/// objective.
inline double prox_radius(const MetricSpec& spec, double beta, int iters, double step, double zmag,
                          double f, double x0) {
  double x = std::max(0.0, x0);
  const bool quartic = spec.kind == Metric::igm || spec.kind == Metric::wigm;
  for (int l = 0; l < iters; ++l) {
    const double g = metric_detail::grad_factor(spec, x * x, f) * x + beta * (x - zmag);
    const double d = quartic
                         ? 1.0 / (beta + std::max(0.0, metric_detail::quartic_curvature(spec, x, f)))
                         : step;
    x = std::max(0.0, x - d * g);
  }
  return x;
}

/// Elementwise Prox^beta_G: out = rho o sign(z_plus), rho from prox_radius
/// warm-started at |warm|.
inline void metric_prox_into(const MetricSpec& spec, const ProxConfig& cfg, std::span<const cplx> z_plus,
                             std::span<const double> f, std::span<const cplx> warm, std::span<cplx> out) {
  const double step = cfg.effective_step(spec.kind);
  for (std::size_t i = 0; i < z_plus.size(); ++i) {
    const double r = std::abs(z_plus[i]);
    const double rho = prox_radius(spec, cfg.beta, cfg.inner_iters, step, r, f[i], std::abs(warm[i]));
    out[i] = rho * unit_phase(z_plus[i]);
  }
}

inline ComplexStack metric_prox(const MetricSpec& spec, const ProxConfig& cfg, const ComplexStack& z_plus,
                                const RealStack& f, const ComplexStack& warm) {
  detail::check_stacks(z_plus, f);
  detail::check_stacks(z_plus, warm);
  validate(spec);
  validate(cfg);
  ComplexStack out(z_plus.frames(), z_plus.side());
  metric_prox_into(spec, cfg, z_plus.span(), f.span(), warm.span(), out.span());
  return out;
}

}  // namespace ptycho
