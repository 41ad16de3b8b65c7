#pragma once

#include <chrono>
#include <cmath>
#include <concepts>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ptycho/admm.hpp"
#include "ptycho/baselines.hpp"
#include "ptycho/error.hpp"
#include "ptycho/evaluation.hpp"
#include "ptycho/parallel.hpp"

namespace ptycho {

/// Anything the runner can drive: one call to step() is one reported
/// iteration.
template <class S>
concept IterativeSolver = requires(S s) {
  { s.step() } -> std::same_as<IterationRecord>;
  { s.omega() } -> std::convertible_to<const ComplexField&>;
  { s.u() } -> std::convertible_to<const ComplexField&>;
  { s.iteration() } -> std::convertible_to<int>;
};

/// Model I solver bound to a dataset.
class AdmmSolver {
 public:
  AdmmSolver(const RealStack& f, const ScanLattice& lat, SolverConfigI cfg)
      : AdmmSolver(f, lat, std::move(cfg), init_state_i(f, lat)) {}
  AdmmSolver(const RealStack& f, const ScanLattice& lat, SolverConfigI cfg, SolverStateI state)
      : f_(&f), lat_(&lat), cfg_(std::move(cfg)), state_(std::move(state)) {
    validate(cfg_);
    detail::check_data_geometry(f, lat);
    detail::check_pair(state_.omega, state_.u, lat);
  }

  IterationRecord step() { return admm_step(state_, *f_, *lat_, cfg_); }
  const ComplexField& omega() const { return state_.omega; }
  const ComplexField& u() const { return state_.u; }
  int iteration() const { return state_.iter; }
  const SolverStateI& state() const { return state_; }
  const SolverConfigI& config() const { return cfg_; }
  double augmented_lagrangian() const { return ptycho::augmented_lagrangian(state_, *f_, *lat_, cfg_); }

 private:
  const RealStack* f_;
  const ScanLattice* lat_;
  SolverConfigI cfg_;
  SolverStateI state_;
};

/// Model II solver bound to a dataset and probe diffraction data.
class Admm2Solver {
 public:
  Admm2Solver(const RealStack& f, const ScanLattice& lat, SolverConfigII cfg)
      : Admm2Solver(f, lat, std::move(cfg), init_state_ii(f, lat)) {}
  Admm2Solver(const RealStack& f, const ScanLattice& lat, SolverConfigII cfg, SolverStateII state)
      : f_(&f), lat_(&lat), cfg_(std::move(cfg)), state_(std::move(state)) {
    validate(cfg_);
    detail::check_data_geometry(f, lat);
    detail::check_pair(state_.omega, state_.u, lat);
    if (!cfg_.probe_dp.same_shape(state_.omega)) throw DataError("probe diffraction data must be frame-sized");
  }

  IterationRecord step() { return admm2_step(state_, *f_, *lat_, cfg_); }
  const ComplexField& omega() const { return state_.omega; }
  const ComplexField& u() const { return state_.u; }
  int iteration() const { return state_.iter; }
  const SolverStateII& state() const { return state_; }
  double augmented_lagrangian() const { return ptycho::augmented_lagrangian(state_, *f_, *lat_, cfg_); }

 private:
  const RealStack* f_;
  const ScanLattice* lat_;
  SolverConfigII cfg_;
  SolverStateII state_;
};

/// ePIE, DR or PALM bound to a dataset.
class BaselineSolver {
 public:
  BaselineSolver(const RealStack& f, const ScanLattice& lat, BaselineConfig cfg)
      : BaselineSolver(f, lat, cfg, make_baseline_state(initial_probe(f, lat), initial_image(lat), lat, cfg)) {}
  BaselineSolver(const RealStack& f, const ScanLattice& lat, BaselineConfig cfg, BaselineState state)
      : f_(&f), lat_(&lat), a_(sqrt_stack(f)), cfg_(std::move(cfg)), state_(std::move(state)) {
    validate(cfg_);
    detail::check_data_geometry(f, lat);
    detail::check_pair(state_.omega, state_.u, lat);
  }

  IterationRecord step() {
    switch (cfg_.algorithm) {
      case BaselineAlgorithm::epie: return epie_step(state_, a_, *f_, *lat_, cfg_);
      case BaselineAlgorithm::dr: return dr_step(state_, a_, *f_, *lat_, cfg_);
      case BaselineAlgorithm::palm: return palm_step(state_, *f_, *lat_, cfg_);
    }
    throw ConfigError("unknown baseline algorithm");
  }
  const ComplexField& omega() const { return state_.omega; }
  const ComplexField& u() const { return state_.u; }
  int iteration() const { return state_.iter; }
  const BaselineState& state() const { return state_; }

 private:
  const RealStack* f_;
  const ScanLattice* lat_;
  RealStack a_;
  BaselineConfig cfg_;
  BaselineState state_;
};

struct GroundTruth {
  ComplexField omega;
  ComplexField u;
};

struct RunOptions {
  int max_iters = 1000;
  double rfactor_tol = 1e-6;
  const GroundTruth* truth = nullptr;  ///< enables the SNR columns
};

enum class StopReason { tolerance, max_iters };

struct RunResult {
  std::vector<IterationRecord> trace;
  StopReason reason = StopReason::max_iters;
};

/// Steps until R-factor <= rfactor_tol or max_iters steps were taken.
/// wall_ms is cumulative since the start of the run.
template <IterativeSolver S>
RunResult run_solver(S& solver, const RunOptions& opt) {
  if (opt.max_iters < 0) throw ConfigError("max_iters must be >= 0");
  RunResult out;
  out.trace.reserve(static_cast<std::size_t>(opt.max_iters));
  const auto t0 = std::chrono::steady_clock::now();
  for (int k = 0; k < opt.max_iters; ++k) {
    IterationRecord rec = solver.step();
    if (!std::isfinite(rec.r_factor) || rec.r_factor > 1e12 || max_abs(solver.omega().span()) > 1e12 ||
        max_abs(solver.u().span()) > 1e12)
      throw DivergenceError("iteration " + std::to_string(rec.iter) + ": R-factor or iterate norm exceeded 1e12");
    if (opt.truth) {
      rec.snr_u = snr_aligned(solver.u(), opt.truth->u).db;
      rec.snr_probe = snr_aligned(solver.omega(), opt.truth->omega).db;
    }
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    out.trace.push_back(rec);
    if (rec.r_factor <= opt.rfactor_tol) {
      out.reason = StopReason::tolerance;
      break;
    }
  }
  return out;
}

inline constexpr const char* kTraceHeader = "iter,r_factor,snr_u,snr_probe,aug_lagrangian,i_u,i_omega,wall_ms";

namespace detail {

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string format_opt(const std::optional<double>& v) { return v ? format_g17(*v) : std::string(); }

}  // namespace detail

/// CSV convergence trace. With include_timing = false the wall_ms field is
/// left empty, which makes traces byte-comparable across runs.
inline void write_trace_csv(std::ostream& os, const std::vector<IterationRecord>& trace, bool include_timing) {
  os << kTraceHeader << '\n';
  for (const auto& r : trace) {
    os << r.iter << ',' << detail::format_g17(r.r_factor) << ',' << detail::format_opt(r.snr_u) << ','
       << detail::format_opt(r.snr_probe) << ',' << detail::format_g17(r.aug_lagrangian) << ','
       << detail::format_g17(r.i_u) << ',' << detail::format_g17(r.i_omega) << ','
       << (include_timing ? detail::format_g17(r.wall_ms) : std::string()) << '\n';
  }
}

inline void write_trace_csv(std::ostream& os, const std::vector<IterationRecord>& trace) {
  write_trace_csv(os, trace, !deterministic_mode());
}

}  // namespace ptycho
