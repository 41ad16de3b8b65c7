#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "ptycho/ptycho.hpp"
#include "support/oracles.hpp"

using namespace ptycho;

namespace {

Dataset small_dataset(LatticeKind kind = LatticeKind::random, std::optional<NoiseSpec> noise = std::nullopt) {
  DatasetSpec s;
  s.image_side = 32;
  s.frame_side = 8;
  s.dist = 2;
  s.lattice = kind;
  s.lattice_seed = 3;
  s.noise = noise;
  return make_dataset(s);
}

SolverConfigI pagm_config(const RealStack& f, double beta = 0.04) {
  SolverConfigI c;
  c.beta = beta;
  c.alpha1 = c.alpha2 = beta;
  c.precond = Safeguard{};
  c.metric = {Metric::pagm, default_epsilon(f.span())};
  return c;
}

RealField probe_magnitudes(const ComplexField& omega) {
  const ComplexField fw = unitary_dft(omega);
  RealField c(fw.rows(), fw.cols());
  for (std::size_t t = 0; t < c.size(); ++t) c[t] = std::abs(fw[t]);
  return c;
}

SolverConfigII model2_config(const RealStack& f, const ComplexField& omega_true) {
  SolverConfigII c;
  c.beta1 = 0.04;
  c.beta2 = 0.4;
  c.tau = 10.0;
  c.alpha1 = c.alpha2 = 0.04;
  c.precond = Safeguard{};
  c.metric = {Metric::pagm, default_epsilon(f.span())};
  c.probe_dp = probe_magnitudes(omega_true);
  std::vector<double> c2(c.probe_dp.size());
  for (std::size_t t = 0; t < c2.size(); ++t) c2[t] = c.probe_dp[t] * c.probe_dp[t];
  c.probe_metric = {Metric::pagm, default_epsilon(c2)};
  return c;
}

double max_rel(const ComplexField& a, const ComplexField& b) { return oracle::rel_diff(a.span(), b.span()); }

}  // namespace

TEST(Init, InitialIterates) {
  const auto d = small_dataset();
  const auto s = init_state_i(d.f, d.lattice);
  for (const auto& x : s.u.values()) EXPECT_EQ(x, cplx(1.0, 0.0));
  for (const auto& x : s.lambda.values()) EXPECT_EQ(x, cplx{});
  EXPECT_LE(oracle::rel_diff(s.z.span(), forward(s.omega, s.u, d.lattice).span()), 0.0);

  // omega0: mean magnitude, inverse transform, origin moved to the center.
  const std::size_t m = 8;
  ComplexField mean(m, m);
  for (std::size_t j = 0; j < d.f.frames(); ++j)
    for (std::size_t t = 0; t < m * m; ++t) mean[t] += std::sqrt(d.f.frame(j)[t]) / static_cast<double>(d.f.frames());
  const ComplexField back = oracle::naive_dft(mean, true);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < m; ++c)
      EXPECT_NEAR(std::abs(s.omega(r, c) - back((r + m - 4) % m, (c + m - 4) % m)), 0.0, 1e-12);

  const auto s2 = init_state_ii(d.f, d.lattice);
  EXPECT_LE(oracle::rel_diff(s2.z2.span(), unitary_dft(s2.omega).span()), 1e-15);
  for (const auto& x : s2.lambda2.values()) EXPECT_EQ(x, cplx{});
}

TEST(Admm, ExactSolutionIsFixedPoint) {
  const auto d = small_dataset();
  for (bool safeguarded : {true, false}) {
    auto cfg = pagm_config(d.f);
    if (!safeguarded) cfg.precond.reset();
    auto s = make_state_i(d.omega_true, d.u_true, d.lattice);
    admm_step(s, d.f, d.lattice, cfg);
    EXPECT_LE(max_rel(s.omega, d.omega_true), 1e-10);
    EXPECT_LE(max_rel(s.u, d.u_true), 1e-10);
    EXPECT_LE(oracle::rel_diff(s.z.span(), forward(d.omega_true, d.u_true, d.lattice).span()), 1e-10);
    EXPECT_LE(norm_sq(s.lambda.span()), 1e-20 * norm_sq(s.z.span()));
  }
}

TEST(Admm2, ExactSolutionIsFixedPoint) {
  const auto d = small_dataset(LatticeKind::square);
  const auto cfg = model2_config(d.f, d.omega_true);
  auto s = make_state_ii(d.omega_true, d.u_true, d.lattice);
  admm2_step(s, d.f, d.lattice, cfg);
  EXPECT_LE(max_rel(s.omega, d.omega_true), 1e-10);
  EXPECT_LE(max_rel(s.u, d.u_true), 1e-10);
  EXPECT_LE(oracle::rel_diff(s.z2.span(), unitary_dft(d.omega_true).span()), 1e-10);
}

TEST(Admm2, ReducesToModelIProbeUpdate) {
  // beta2 -> 0 (and tau -> 0) removes the probe-data terms from the omega update.
  const auto d = small_dataset();
  auto c1 = pagm_config(d.f);
  auto c2 = model2_config(d.f, d.omega_true);
  c2.beta2 = 1e-14;
  c2.tau = 1e-14;
  auto s1 = init_state_i(d.f, d.lattice);
  auto s2 = init_state_ii(d.f, d.lattice);
  admm_step(s1, d.f, d.lattice, c1);
  admm2_step(s2, d.f, d.lattice, c2);
  EXPECT_LE(max_rel(s2.omega, s1.omega), 1e-9);
  EXPECT_LE(max_rel(s2.u, s1.u), 1e-9);
}

TEST(Admm2, SinglePixelProbeFormula) {
  // One-pixel check of the omega update against the formula written out by hand.
  const ScanLattice lat{LatticeKind::square, 1, 1, 1, 0, {{0, 0}}};
  const cplx u{0.5, 1.5}, y1{2.0, -1.0}, y2{-0.3, 0.8}, w{0.9, 0.1};
  const double b1 = 0.7, b2 = 0.2, a = 0.3;
  ComplexStack y(1, 1);
  y[0] = y1;
  const std::vector<cplx> extra{b2 * y2};
  const ComplexField out = detail::probe_update(ComplexField(1, 1, w), ComplexField(1, 1, u), y, lat,
                                                RealField(1, 1, std::norm(u)), b1, extra, b2, a, 1e8);
  const cplx want = (b1 * std::conj(u) * y1 + b2 * y2 + a * w) / (b1 * std::norm(u) + b2 + a);
  EXPECT_NEAR(std::abs(out[0] - want), 0.0, 1e-15);
  const ComplexField lim = detail::probe_update(ComplexField(1, 1, w), ComplexField(1, 1, u), y, lat,
                                                RealField(1, 1, std::norm(u)), b1, {}, 0.0, 0.0, 1e8);
  EXPECT_NEAR(std::abs(lim[0] - y1 / u), 0.0, 1e-15);
}

TEST(Admm, SafeguardLowerBoundsAndCaps) {
  const auto d = small_dataset();
  auto cfg = pagm_config(d.f);
  cfg.c_omega = 20.0;
  cfg.c_u = 0.9;
  AdmmSolver solver(d.f, d.lattice, cfg);
  const Safeguard g{};
  const double lo_u = 2.0 * g.s1 * cfg.alpha1 / cfg.beta * std::min(1.0, g.r1);
  const double lo_w = 2.0 * g.s2 * cfg.alpha2 / cfg.beta * std::min(1.0, g.r2);
  for (int k = 0; k < 30; ++k) {
    const auto rec = solver.step();
    EXPECT_GE(rec.i_u, lo_u);
    EXPECT_GE(rec.i_omega, lo_w);
    EXPECT_LE(max_abs(solver.omega().span()), cfg.c_omega);
    EXPECT_LE(max_abs(solver.u().span()), cfg.c_u);
  }
}

TEST(Admm, SafeguardWeightRule) {
  EXPECT_EQ(detail::safeguard_weight(1e-7, 1e-6, 0.5), 1e-6);
  EXPECT_EQ(detail::safeguard_weight(1e-6, 1e-6, 0.5), 1e-6);
  EXPECT_EQ(detail::safeguard_weight(4.0, 1e-6, 0.5), 2.0);
}

TEST(Admm, OverlapViolationWithoutPreconditioner) {
  // A single frame cannot cover a 16x16 image.
  const ScanLattice lat{LatticeKind::square, 16, 4, 4, 0, {{0, 0}}};
  const auto f = intensities(forward(ComplexField(4, 4, 1.0), ComplexField(16, 16, 1.0), lat));
  SolverConfigI cfg;
  cfg.beta = 0.1;
  cfg.metric = {Metric::pagm, 1e-3};
  auto s = init_state_i(f, lat);
  try {
    admm_step(s, f, lat, cfg);
    FAIL() << "expected OverlapViolation";
  } catch (const OverlapViolation& e) {
    EXPECT_EQ(e.pixel(), 4u);  // first image pixel outside the window
  }
  cfg.precond = Safeguard{};
  cfg.alpha1 = cfg.alpha2 = 0.1;
  auto s2 = init_state_i(f, lat);
  EXPECT_NO_THROW(admm_step(s2, f, lat, cfg));
}

TEST(Admm, ExactProxGivesMultiplierIdentity) {
  const auto d = small_dataset();
  auto cfg = pagm_config(d.f);
  cfg.prox_inner_iters = 400;
  auto s = init_state_i(d.f, d.lattice);
  for (int k = 0; k < 5; ++k) {
    admm_step(s, d.f, d.lattice, cfg);
    const auto g = metric_gradient(cfg.metric, s.z, d.f);
    double res = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) res = std::max(res, std::abs(s.lambda[i] + g[i]));
    EXPECT_LE(res, 1e-8) << "iteration " << s.iter;
  }
}

TEST(Admm, RelaxedMultiplierResidualDecreases) {
  const auto d = small_dataset();
  AdmmSolver solver(d.f, d.lattice, pagm_config(d.f));
  const auto first = solver.step().multiplier_residual;
  double last = first;
  for (int k = 0; k < 200; ++k) last = solver.step().multiplier_residual;
  EXPECT_GT(first, 0.0);
  EXPECT_LT(last, 1e-2 * first);
}

TEST(Admm, AugmentedLagrangianNonincreasingAtLargeBeta) {
  const auto d = small_dataset();
  for (Metric m : {Metric::pagm, Metric::pipm}) {
    auto cfg = pagm_config(d.f);
    cfg.metric = {m, default_epsilon(d.f.span())};
    cfg.beta = 4.5 * lipschitz_bound(cfg.metric, d.f);
    cfg.alpha1 = cfg.alpha2 = cfg.beta;
    AdmmSolver solver(d.f, d.lattice, cfg);
    const double u0 = solver.augmented_lagrangian();
    double prev = solver.step().aug_lagrangian;  // from k = 1 on
    for (int k = 0; k < 50; ++k) {
      const double cur = solver.step().aug_lagrangian;
      EXPECT_LE(cur, prev + 1e-10 * std::abs(u0)) << to_string(m) << " step " << solver.iteration();
      prev = cur;
    }
  }
}

TEST(Admm, AugmentedLagrangianMatchesRecomputation) {
  const auto d = small_dataset();
  const auto cfg = pagm_config(d.f);
  auto s = init_state_i(d.f, d.lattice);
  EXPECT_NEAR(augmented_lagrangian(s, d.f, d.lattice, cfg), metric_value(cfg.metric, s.z, d.f), 1e-9);
  for (int k = 0; k < 3; ++k) {
    const auto rec = admm_step(s, d.f, d.lattice, cfg);
    const auto az = oracle::forward(s.omega, s.u, d.lattice);
    double want = oracle::metric_total(cfg.metric, s.z.span(), d.f.span());
    for (std::size_t i = 0; i < az.size(); ++i) {
      const cplx r = s.z[i] - az[i];
      want += (r * std::conj(s.lambda[i])).real() + 0.5 * cfg.beta * std::norm(r);
    }
    EXPECT_NEAR(rec.aug_lagrangian, want, 1e-9 * std::abs(want));
    EXPECT_NEAR(augmented_lagrangian(s, d.f, d.lattice, cfg), want, 1e-9 * std::abs(want));
  }
}

TEST(Admm2, AugmentedLagrangianIsSumOfBlocks) {
  const auto d = small_dataset(LatticeKind::square);
  const auto cfg = model2_config(d.f, d.omega_true);
  auto s = init_state_ii(d.f, d.lattice);
  for (int k = 0; k < 3; ++k) admm2_step(s, d.f, d.lattice, cfg);
  SolverStateI first{s.omega, s.u, s.z1, s.lambda1, s.iter};
  SolverConfigI c1 = pagm_config(d.f, cfg.beta1);
  const double block1 = augmented_lagrangian(first, d.f, d.lattice, c1);
  const ComplexField fw = unitary_dft(s.omega);
  double block2 = 0.0;
  for (std::size_t t = 0; t < fw.size(); ++t) {
    const double c2 = cfg.probe_dp[t] * cfg.probe_dp[t];
    const cplx r = s.z2[t] - fw[t];
    block2 += cfg.tau * oracle::metric_value(cfg.probe_metric, s.z2[t], c2) + (r * std::conj(s.lambda2[t])).real() +
              0.5 * cfg.beta2 * std::norm(r);
  }
  const double total = augmented_lagrangian(s, d.f, d.lattice, cfg);
  EXPECT_NEAR(total, block1 + block2, 1e-9 * std::abs(total));
}

TEST(Admm, ConfigValidation) {
  SolverConfigI c;
  c.metric = {Metric::pagm, 1.0};
  EXPECT_NO_THROW(validate(c));
  c.beta = 0.0;
  EXPECT_THROW(validate(c), ConfigError);
  c.beta = 1.0;
  c.precond = Safeguard{0.0, 1.0, 1.0, 1.0};
  EXPECT_THROW(validate(c), ConfigError);
  c.precond.reset();
  c.alpha1 = -1.0;
  EXPECT_THROW(validate(c), ConfigError);
}

TEST(Baselines, ExactSolutionIsFixedPoint) {
  const auto d = small_dataset();
  const RealStack a = sqrt_stack(d.f);
  for (auto alg : {BaselineAlgorithm::epie, BaselineAlgorithm::dr, BaselineAlgorithm::palm}) {
    BaselineConfig cfg;
    cfg.algorithm = alg;
    cfg.metric = {Metric::pagm, default_epsilon(d.f.span())};
    BaselineSolver solver(d.f, d.lattice, cfg, make_baseline_state(d.omega_true, d.u_true, d.lattice, cfg));
    const auto rec = solver.step();
    EXPECT_LE(max_rel(solver.omega(), d.omega_true), 1e-10) << static_cast<int>(alg);
    EXPECT_LE(max_rel(solver.u(), d.u_true), 1e-10) << static_cast<int>(alg);
    EXPECT_LE(rec.r_factor, 1e-10);
  }
}

TEST(Baselines, DrFeasiblePsiUnchanged) {
  const auto d = small_dataset();
  BaselineConfig cfg;
  cfg.algorithm = BaselineAlgorithm::dr;
  cfg.metric = {Metric::pagm, 1e-3};
  auto s = make_baseline_state(d.omega_true, d.u_true, d.lattice, cfg);
  const ComplexStack psi0 = s.psi;
  dr_step(s, sqrt_stack(d.f), d.f, d.lattice, cfg);
  EXPECT_LE(oracle::rel_diff(s.psi.span(), psi0.span()), 1e-10);
}

TEST(Baselines, EpieDeterministicPerSeed) {
  const auto d = small_dataset();
  BaselineConfig cfg;
  cfg.metric = {Metric::pagm, 1e-3};
  auto run = [&](std::uint64_t seed) {
    cfg.seed = seed;
    BaselineSolver s(d.f, d.lattice, cfg);
    for (int k = 0; k < 3; ++k) s.step();
    return s.u();
  };
  EXPECT_EQ(run(4), run(4));
  EXPECT_NE(run(4), run(5));
}

TEST(Baselines, EpieRejectsZeroProbe) {
  const auto d = small_dataset();
  BaselineConfig cfg;
  cfg.metric = {Metric::pagm, 1e-3};
  auto s = make_baseline_state(ComplexField(8, 8), d.u_true, d.lattice, cfg);
  EXPECT_THROW(epie_step(s, sqrt_stack(d.f), d.f, d.lattice, cfg), DataError);
}

TEST(Baselines, PalmGradientsMatchFiniteDifferences) {
  const ScanLattice lat = make_square_lattice(4, 2, 1);
  std::mt19937_64 rng(8);
  const auto w = oracle::random_field(2, 2, rng);
  const auto u = oracle::random_field(4, 4, rng);
  RealStack f = intensities(forward(oracle::random_field(2, 2, rng), oracle::random_field(4, 4, rng), lat));
  for (Metric m : {Metric::pagm, Metric::pipm, Metric::igm, Metric::wigm}) {
    const MetricSpec s{m, 0.1};
    const auto g = palm_gradients(s, w, u, f, lat);
    auto objective = [&](const ComplexField& ww, const ComplexField& uu) {
      const auto z = oracle::forward(ww, uu, lat);
      return oracle::metric_total(s, z.span(), f.span());
    };
    for (std::size_t t = 0; t < w.size(); ++t) {
      const cplx fd = oracle::fd_gradient(
          [&](cplx v) {
            ComplexField ww = w;
            ww[t] = v;
            return objective(ww, u);
          },
          w[t], 1e-6);
      EXPECT_LE(std::abs(g.omega[t] - fd), 1e-5 * std::max(1.0, std::abs(fd))) << to_string(m);
    }
    for (std::size_t i = 0; i < u.size(); ++i) {
      const cplx fd = oracle::fd_gradient(
          [&](cplx v) {
            ComplexField uu = u;
            uu[i] = v;
            return objective(w, uu);
          },
          u[i], 1e-6);
      EXPECT_LE(std::abs(g.u[i] - fd), 1e-5 * std::max(1.0, std::abs(fd))) << to_string(m);
    }
  }
}

TEST(Run, StoppingRules) {
  const auto d = small_dataset();
  AdmmSolver a(d.f, d.lattice, pagm_config(d.f));
  const auto r0 = run_solver(a, {7, 0.0, nullptr});
  EXPECT_EQ(r0.trace.size(), 7u);
  EXPECT_EQ(r0.reason, StopReason::max_iters);
  EXPECT_EQ(r0.trace.back().iter, 7);

  AdmmSolver b(d.f, d.lattice, pagm_config(d.f));
  const auto r1 = run_solver(b, {7, std::numeric_limits<double>::infinity(), nullptr});
  EXPECT_EQ(r1.trace.size(), 1u);
  EXPECT_EQ(r1.reason, StopReason::tolerance);

  AdmmSolver c(d.f, d.lattice, pagm_config(d.f));
  EXPECT_TRUE(run_solver(c, {0, 1e-6, nullptr}).trace.empty());
  EXPECT_EQ(c.iteration(), 0);
  EXPECT_THROW(run_solver(c, {-1, 1e-6, nullptr}), ConfigError);
}

TEST(Run, DivergenceDetected) {
  const auto d = small_dataset();
  BaselineConfig cfg;
  cfg.algorithm = BaselineAlgorithm::palm;
  cfg.palm_steps = PalmStepRule::fixed;
  cfg.palm_tau1 = cfg.palm_tau2 = 1e3;
  cfg.metric = {Metric::igm, 0.0};
  BaselineSolver s(d.f, d.lattice, cfg);
  EXPECT_THROW(run_solver(s, {50, 0.0, nullptr}), DivergenceError);
}

TEST(Run, TraceCsvIsDeterministic) {
  const auto d = small_dataset();
  const GroundTruth truth{d.omega_true, d.u_true};
  auto csv = [&](bool with_truth) {
    AdmmSolver s(d.f, d.lattice, pagm_config(d.f));
    const auto res = run_solver(s, {5, 0.0, with_truth ? &truth : nullptr});
    std::ostringstream os;
    write_trace_csv(os, res.trace, false);
    return os.str();
  };
  const std::string a = csv(true);
  EXPECT_EQ(a, csv(true));
  std::istringstream is(a);
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, kTraceHeader);
  std::getline(is, line);
  EXPECT_EQ(line.rfind("1,", 0), 0u);
  EXPECT_EQ(line.back(), ',');  // wall_ms left empty

  std::istringstream is2(csv(false));
  std::getline(is2, line);
  std::getline(is2, line);
  EXPECT_NE(line.find(",,,"), std::string::npos);  // empty SNR columns
}

TEST(Run, SerialAndThreadedAgree) {
  const auto d = small_dataset();
  auto run = [&] {
    AdmmSolver s(d.f, d.lattice, pagm_config(d.f));
    for (int k = 0; k < 5; ++k) s.step();
    return s.u();
  };
  const auto serial = run();
  ::setenv("PTYCHO_THREADS", "4", 1);
  const auto threaded = run();
  ::setenv("PTYCHO_THREADS", "0", 1);
  EXPECT_LE(max_rel(threaded, serial), 1e-10);
}
