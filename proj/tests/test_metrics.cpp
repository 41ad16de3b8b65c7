#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ptycho/metrics.hpp"
#include "support/oracles.hpp"

using namespace ptycho;

namespace {

const Metric kAll[] = {Metric::pagm, Metric::pipm, Metric::igm, Metric::wigm};

std::string name(Metric m) { return std::string(to_string(m)); }

}  // namespace

TEST(MetricValue, ZeroAtConsistentData) {
  const std::vector<cplx> z{{1.0, 2.0}, {0.0, 0.0}, {-3.0, 0.5}};
  std::vector<double> f(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) f[i] = std::norm(z[i]);
  for (Metric m : {Metric::pagm, Metric::igm, Metric::wigm})
    EXPECT_NEAR(metric_value({m, 1e-3}, z, f), 0.0, 1e-15) << name(m);
}

TEST(MetricValue, PipmMinimumValue) {
  const std::vector<cplx> z{{1.0, 2.0}, {0.3, 0.0}};
  const std::vector<double> f{5.0, 0.09};
  const double e = 0.01;
  double want = 0.0;
  for (double v : f) want += 0.5 * ((v + e) - (v + e) * std::log(v + e));
  EXPECT_NEAR(metric_value({Metric::pipm, e}, z, f), want, 1e-12);
  // It is the minimum over z: any radial perturbation increases it.
  const std::vector<cplx> z2{{1.1, 2.2}, {0.25, 0.0}};
  EXPECT_GT(metric_value({Metric::pipm, e}, z2, f), want);
}

TEST(MetricValue, PagmAtZero) {
  const std::vector<cplx> z(4);
  const std::vector<double> f(4, 0.0);
  EXPECT_EQ(metric_value({Metric::pagm, 1e-6}, z, f), 0.0);
}

TEST(MetricValue, MatchesDefinitions) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> uf(0.0, 4.0);
  std::vector<cplx> z(50);
  std::vector<double> f(50);
  for (auto& x : z) x = {n(rng), n(rng)};
  for (auto& v : f) v = uf(rng);
  for (Metric m : kAll) {
    const MetricSpec s{m, 0.05};
    const double want = oracle::metric_total(s, z, f);
    EXPECT_NEAR(metric_value(s, z, f), want, 1e-12 * std::abs(want)) << name(m);
  }
}

TEST(MetricValue, RejectsNegativeData) {
  const std::vector<cplx> z(2);
  EXPECT_THROW(metric_value({Metric::pagm, 1.0}, z, std::vector<double>{1.0, -0.5}), DataError);
  EXPECT_THROW(metric_value({Metric::pagm, 1.0}, z, std::vector<double>{1.0, NAN}), DataError);
}

TEST(MetricSpec, Validation) {
  EXPECT_THROW(validate(MetricSpec{Metric::pagm, 0.0}), ConfigError);
  EXPECT_THROW(validate(MetricSpec{Metric::wigm, -1.0}), ConfigError);
  EXPECT_NO_THROW(validate(MetricSpec{Metric::igm, 0.0}));
  EXPECT_THROW(parse_metric("agm"), ConfigError);
  for (Metric m : kAll) EXPECT_EQ(parse_metric(to_string(m)), m);
}

TEST(MetricGradient, ZeroCases) {
  RealStack f(1, 2);
  ComplexStack z(1, 2);
  z[0] = {0.6, -0.8};
  z[1] = {3.0, 4.0};
  f[0] = 1.0;
  f[1] = 25.0;
  for (double e : {1e-8, 0.5, 7.0})
    for (const auto held = metric_gradient({Metric::pagm, e}, z, f); const auto& g : held.values()) EXPECT_NEAR(std::abs(g), 0.0, 1e-14);

  const ComplexStack zero(1, 2);
  for (Metric m : kAll)
    for (const auto held = metric_gradient({m, 0.1}, zero, f); const auto& g : held.values()) EXPECT_EQ(g, cplx{}) << name(m);
}

TEST(MetricGradient, MatchesFiniteDifferences) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> uf(0.0, 4.0);
  std::uniform_real_distribution<double> ue(0.05, 1.0);
  for (Metric m : kAll) {
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const cplx z{n(rng), n(rng)};
      const double f = uf(rng);
      const MetricSpec s{m, ue(rng)};
      std::vector<cplx> g(1);
      metric_gradient_into(s, std::span<const cplx>(&z, 1), std::span<const double>(&f, 1), g);
      const cplx fd = oracle::fd_gradient([&](cplx w) { return oracle::metric_value(s, w, f); }, z, 1e-6);
      worst = std::max(worst, std::abs(g[0] - fd) / std::max(std::abs(fd), 1e-3));
    }
    EXPECT_LE(worst, 1e-5) << name(m);
  }
}

TEST(Lipschitz, PlugInValues) {
  const std::vector<double> f(3, 0.0);
  EXPECT_DOUBLE_EQ(lipschitz_bound({Metric::pagm, 1.0}, f), 3.0);
  EXPECT_DOUBLE_EQ(lipschitz_bound({Metric::pipm, 1.0}, f), 3.0);
  const std::vector<double> g{0.0, 3.0};
  EXPECT_DOUBLE_EQ(lipschitz_bound({Metric::pagm, 1.0}, g), 5.0);
  EXPECT_DOUBLE_EQ(lipschitz_bound({Metric::pipm, 1.0}, g), 9.0);
}

TEST(Lipschitz, UnsupportedMetrics) {
  const std::vector<double> f(3, 1.0);
  EXPECT_THROW(lipschitz_bound({Metric::igm, 0.0}, f), ConfigError);
  EXPECT_THROW(lipschitz_bound({Metric::wigm, 1.0}, f), ConfigError);
}

TEST(Lipschitz, SampledInequality) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> uf(0.0, 4.0);
  for (Metric m : {Metric::pagm, Metric::pipm}) {
    for (double e : {1e-3, 0.1, 1.0}) {
      const MetricSpec s{m, e};
      const std::size_t N = 64;
      std::vector<double> f(N);
      for (auto& v : f) v = uf(rng);
      const double L = lipschitz_bound(s, f);
      for (int trial = 0; trial < 200; ++trial) {
        std::vector<cplx> a(N), b(N), ga(N), gb(N);
        const double scale = trial % 2 ? 0.05 : 2.0;
        for (std::size_t i = 0; i < N; ++i) {
          a[i] = {scale * n(rng), scale * n(rng)};
          b[i] = a[i] + cplx{scale * n(rng), scale * n(rng)};
        }
        metric_gradient_into(s, a, f, ga);
        metric_gradient_into(s, b, f, gb);
        double dg = 0.0, dz = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
          dg += std::norm(ga[i] - gb[i]);
          dz += std::norm(a[i] - b[i]);
        }
        EXPECT_LE(std::sqrt(dg), L * std::sqrt(dz) * (1.0 + 1e-10)) << name(m) << " eps=" << e;
      }
    }
  }
}

TEST(Prox, ConsistentDataFixedPoint) {
  // f = |z+|^2 with real positive z+: x = |z+| is a fixed point of the recursion.
  for (double z : {0.3, 1.0, 2.5}) {
    const double f = z * z;
    for (double beta : {0.04, 1.0, 10.0}) {
      for (Metric m : {Metric::pagm, Metric::igm, Metric::wigm}) {
        const MetricSpec s{m, 1e-4};
        EXPECT_NEAR(prox_radius(s, beta, 1, default_prox_step(m, beta), z, f, z), z, 1e-14) << name(m);
        std::vector<cplx> out(1);
        const cplx zp{z, 0.0};
        metric_prox_into(s, ProxConfig{beta, 3, {}}, std::span<const cplx>(&zp, 1),
                         std::span<const double>(&f, 1), std::span<const cplx>(&zp, 1), out);
        EXPECT_NEAR(std::abs(out[0] - zp), 0.0, 1e-14);
      }
    }
  }
}

TEST(Prox, ZeroInputZeroData) {
  for (Metric m : kAll) {
    ComplexStack zp(1, 2);
    RealStack f(1, 2);
    const auto out = metric_prox({m, 0.1}, ProxConfig{0.5, 10, {}}, zp, f, zp);
    for (const auto& x : out.values()) EXPECT_EQ(x, cplx{}) << name(m);
  }
}

TEST(Prox, DefaultStep) {
  const ProxConfig unset{3.0, 1, {}};
  const ProxConfig fixed{3.0, 1, 0.7};
  EXPECT_DOUBLE_EQ(unset.effective_step(Metric::pagm), 0.25);
  EXPECT_DOUBLE_EQ(unset.effective_step(Metric::pipm), 0.125);
  EXPECT_DOUBLE_EQ(fixed.effective_step(Metric::pipm), 0.7);
  EXPECT_THROW(validate(ProxConfig{0.0, 1, {}}), ConfigError);
  EXPECT_THROW(validate(ProxConfig{1.0, 0, {}}), ConfigError);
  EXPECT_THROW(validate(ProxConfig{1.0, 1, -0.1}), ConfigError);
}

TEST(Prox, PhasePreservedAndNonnegative) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> uf(0.0, 4.0);
  for (Metric m : kAll) {
    ComplexStack zp(2, 4);
    RealStack f(2, 4);
    for (auto& x : zp.values()) x = {n(rng), n(rng)};
    for (auto& v : f.values()) v = uf(rng);
    const auto out = metric_prox({m, 0.1}, ProxConfig{0.7, 50, {}}, zp, f, zp);
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (std::abs(out[i]) == 0.0) continue;
      EXPECT_NEAR(std::abs(out[i] / std::abs(out[i]) - zp[i] / std::abs(zp[i])), 0.0, 1e-14) << name(m);
    }
  }
}

TEST(Prox, FirstOrderCondition) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> uf(0.0, 4.0);
  std::uniform_real_distribution<double> ub(0.5, 5.0);
  for (Metric m : kAll) {
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const MetricSpec s{m, 0.1};
      const double beta = ub(rng);
      const cplx zp{n(rng), n(rng)};
      const double f = uf(rng);
      std::vector<cplx> out(1), g(1);
      metric_prox_into(s, ProxConfig{beta, 2000, {}}, std::span<const cplx>(&zp, 1), std::span<const double>(&f, 1),
                       std::span<const cplx>(&zp, 1), out);
      if (std::abs(out[0]) == 0.0) continue;  // boundary of x >= 0
      metric_gradient_into(s, out, std::span<const double>(&f, 1), g);
      worst = std::max(worst, std::abs(g[0] + beta * (out[0] - zp)));
    }
    EXPECT_LE(worst, 1e-6) << name(m);
  }
}

TEST(ProxOracle, LargeBetaLimit) {
  for (Metric m : kAll) EXPECT_NEAR(oracle::prox_radius({m, 0.1}, 1e9, 1.7, 0.4), 1.7, 1e-6) << name(m);
}

TEST(ProxOracle, ConsistentDataPagm) {
  for (double z : {0.2, 1.3, 2.9}) EXPECT_NEAR(oracle::prox_radius({Metric::pagm, 1e-6}, 0.5, z, z * z), z, 1e-8);
}

TEST(ProxOracle, StableUnderGridRefinement) {
  const MetricSpec s{Metric::pipm, 1e-6};
  const double coarse = oracle::prox_radius(s, 0.5, 1.3, 2.0, 1e-3);
  const double fine = oracle::prox_radius(s, 0.5, 1.3, 2.0, 1e-4);
  const double finer = oracle::prox_radius(s, 0.5, 1.3, 2.0, 2e-5);
  EXPECT_NEAR(coarse, fine, 1e-8);
  EXPECT_NEAR(fine, finer, 1e-8);
  // Stationarity of the radial objective at the oracle's answer.
  const double x = fine;
  const double g = (1.0 - (2.0 + 1e-6) / (x * x + 1e-6)) * x + 0.5 * (x - 1.3);
  EXPECT_NEAR(g, 0.0, 1e-7);
}

TEST(Prox, MatchesOracleOnRandomScalars) {
  // Sampling: beta log-uniform in [0.1, 10], |z+| in [0, 3], f in [0, 4],
  // eps log-uniform in [1e-3, 1]; warm start at |z+|.
  for (Metric m : kAll) {
    std::mt19937_64 rng(100 + static_cast<int>(m));
    std::uniform_real_distribution<double> ub(std::log(0.1), std::log(10.0));
    std::uniform_real_distribution<double> uz(0.0, 3.0);
    std::uniform_real_distribution<double> uf(0.0, 4.0);
    std::uniform_real_distribution<double> ue(std::log(1e-3), 0.0);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const double beta = std::exp(ub(rng));
      const double z = uz(rng);
      const double f = uf(rng);
      const MetricSpec s{m, std::exp(ue(rng))};
      const double rho = prox_radius(s, beta, 200, default_prox_step(m, beta), z, f, z);
      worst = std::max(worst, std::abs(rho - oracle::prox_radius(s, beta, z, f)));
    }
    EXPECT_LE(worst, 1e-6) << name(m);
  }
}
