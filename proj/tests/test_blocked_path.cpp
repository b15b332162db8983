#include <gtest/gtest.h>

#include <sstream>

#include "oracles.hpp"
#include "romlab/blocked_path.hpp"

using namespace romlab;

namespace {

ObstacleGrid make(double F, std::uint64_t seed = 1) {
  FieldConfig c;
  c.F = F;
  c.seed = seed;
  return ObstacleGrid(c);
}

/// Fine-step RK4 of v'' = load(x, v) - F chi(x) across one strip.
std::pair<double, double> strip_oracle(const ObstacleGrid &g, int column, double v,
                                        double s, int steps) {
  const double d = g.delta();
  const double h = 2 * d / steps;
  auto acc = [&](double x, double y) { return g.obstacle_load(x, y) - g.F() * g.cutoff()(x); };
  double x = column - d;
  for (int k = 0; k < steps; ++k) {
    const double k1v = s, k1s = acc(x, v);
    const double k2v = s + 0.5 * h * k1s, k2s = acc(x + 0.5 * h, v + 0.5 * h * k1v);
    const double k3v = s + 0.5 * h * k2s, k3s = acc(x + 0.5 * h, v + 0.5 * h * k2v);
    const double k4v = s + h * k3s, k4s = acc(x + h, v + h * k3v);
    v += h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v);
    s += h / 6 * (k1s + 2 * k2s + 2 * k3s + k4s);
    x += h;
  }
  return {v, s};
}

} // namespace

TEST(Gap, StraightLineWithoutForce) {
  const auto r = integrate_gap(make(0.0), 2.1, 0.4, -1.3);
  EXPECT_DOUBLE_EQ(r.slope1, -1.3);
  EXPECT_NEAR(r.v1, 0.4 + 0.8 * -1.3, 1e-15);
}

TEST(Gap, UnitCutoffDrop) {
  const auto r = integrate_gap(make(2.0).with_unit_cutoff(), 0.1, 0.0, 1.0);
  EXPECT_NEAR(r.slope1 - 1.0, -1.6, 1e-14);
  EXPECT_NEAR(r.v1, 0.8 - 2.0 * 0.32, 1e-14);
}

TEST(Gap, SmoothCutoffDropMatchesQuadrature) {
  const double F = 3.0;
  const auto g = make(F);
  const auto r = integrate_gap(g, -3 + 0.1, 1.0, 2.0);
  const double ref = F * oracle::simpson([](double x) { return oracle::chi(x, 0.1, 0.05); },
                                         0.1, 0.9, 400000);
  EXPECT_NEAR(2.0 - r.slope1, ref, 1e-10);
  EXPECT_GE(2.0 - r.slope1, F * (1 - 2 * 0.15) - 1e-12);
  EXPECT_LE(2.0 - r.slope1, F * (1 - 2 * 0.1) + 1e-12);
  EXPECT_THROW(integrate_gap(g, 0.3, 0.0, 0.0), DomainError);
}

TEST(Strip, StraightLineWithoutObstacles) {
  const auto r = integrate_strip(make(0.0).with_cap(0.0), 3, 1.25, 0.7, 0.002);
  EXPECT_NEAR(r.v1, 1.25 + 0.2 * 0.7, 1e-14);
  EXPECT_NEAR(r.slope1, 0.7, 1e-14);
  EXPECT_THROW(integrate_strip(make(0.0), 0, 0.0, 0.0, 0.01), DomainError);
}

TEST(Strip, SingleObstacleGainMatchesFineOracle) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto g = make(0.0, seed);
    const double v0 = 0.5; // row 0 centre
    const auto r = integrate_strip(g, 0, v0, 0.0, 0.002);
    const auto ref = strip_oracle(g, 0, v0, 0.0, 20000);
    ASSERT_GT(ref.second, 0.0);
    EXPECT_NEAR(r.slope1, ref.second, 0.01 * ref.second);
    EXPECT_NEAR(r.v1, ref.first, 1e-8);
    // Nearly flat inside the bump: gain ~ l * int phi_x * phi_s(0).
    const double l = g.strength(0, 0);
    const double cross = l * g.bump().factor_integral();
    EXPECT_NEAR(r.slope1, cross, 0.05 * cross);
  }
}

TEST(Strip, SlopeGainWindowBound) {
  // Strong obstacles (mean strength 10) so that gains of order one are common.
  rng::CounterStream rs(77);
  int checked = 0;
  for (int n = 0; n < 4000; ++n) {
    FieldConfig c;
    c.F = 3.0;
    c.lambda0 = 0.1;
    c.seed = static_cast<std::uint64_t>(n);
    const ObstacleGrid g(c);
    const double v0 = 4.0 * rs.uniform() - 2.0;
    const double s0 = 6.0 * rs.uniform() - 3.0;
    double step = 0.002;
    StripResult r{};
    for (;;) {
      try {
        r = integrate_strip(g, 1, v0, s0, step);
        break;
      } catch (const StepTooCoarse &) {
        step *= 0.5;
      }
    }
    const double k = r.slope1 - s0;
    const double M = std::max(std::abs(s0), std::abs(r.slope1));
    if (!(k >= 1.0))
      continue;
    ++checked;
    EXPECT_GE(M, 0.5);
    const double v_hat = v0 + 0.2 * s0;
    const double bound = 18 * 0.1 / M * g.window_sum(1, v_hat, 4 * 0.1 * M);
    EXPECT_LE(k, bound + 1e-9) << n;
  }
  EXPECT_GT(checked, 50);
}

TEST(Shoot, ClosedFormTerminal) {
  const double F = 2.0;
  const int N = 4;
  const double L = N - 0.1;
  const Shooter sh(make(F).with_cap(0.0).with_unit_cutoff(), N);
  for (double s0 : {0.0, 3.0, F * L, 11.0})
    EXPECT_NEAR(sh.terminal(s0, 0.002), 2 * L * s0 - 2 * F * L * L, 1e-8);
}

TEST(Shoot, ZeroDataZeroPath) {
  const Shooter sh(make(0.0).with_cap(0.0), 3);
  const auto p = sh.shoot(0.0, 0.002);
  for (const auto &s : p.samples)
    ASSERT_EQ(s.v, 0.0);
}

TEST(Shoot, TerminalMonotoneWithoutObstacles) {
  const Shooter sh(make(3.0).with_cap(0.0), 5);
  double prev = -INFINITY;
  for (double s0 = 0.0; s0 <= 20.0; s0 += 0.5) {
    const double t = sh.terminal(s0, 0.002);
    EXPECT_GT(t, prev);
    prev = t;
  }
}

TEST(Dirichlet, ParabolaIsTheUniqueSolution) {
  const double F = 2.0;
  const int N = 4;
  const double d = 0.1;
  const auto search = find_dirichlet_paths(make(F).with_cap(0.0).with_unit_cutoff(), N, {}, false);
  ASSERT_EQ(search.paths.size(), 1u);
  const auto &p = search.paths[0];
  EXPECT_NEAR(p.slope0, F * (N - d), 1e-8);
  double worst = 0.0;
  for (const auto &s : p.samples)
    if (s.x >= -N + d - 1e-12 && s.x <= N - d + 1e-12)
      worst = std::max(worst, std::abs(s.v - oracle::parabola(F, N, d, s.x)));
  EXPECT_LT(worst, 1e-8);
  EXPECT_TRUE(p.validated);
}

TEST(Dirichlet, ZeroForceFindsZeroPath) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto search = find_dirichlet_paths(make(0.0, seed), 4, {}, false);
    bool zero = false;
    for (const auto &p : search.paths)
      zero = zero || (std::abs(p.slope0) < 1e-8 && std::abs(p.min_value()) < 1e-8);
    EXPECT_TRUE(zero) << seed;
  }
}

TEST(Dirichlet, GenericSeedsSelfValidate) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto search = find_dirichlet_paths(make(3.0, seed), 8, {}, false);
    ASSERT_FALSE(search.paths.empty()) << seed;
    for (const auto &p : search.paths) {
      EXPECT_LT(p.junction_residual, 1e-6);
      EXPECT_TRUE(p.validated);
      EXPECT_LT(std::abs(p.terminal), 1e-8);
      for (int i = -7; i <= 7; ++i)
        EXPECT_GE(p.at(i).slope_out, p.at(i).slope_in - 1e-8); // strips are convex
    }
  }
}

TEST(Dirichlet, NonnegativeGridStartsAtZero) {
  const Shooter sh(make(3.0, 2), 6);
  const auto grid = default_slope_grid(sh, true);
  EXPECT_EQ(grid.front(), 0.0);
  EXPECT_GT(grid.back(), sh.free_root());
  EXPECT_THROW(find_dirichlet_paths(sh, {}), ConfigError);
}

TEST(Export, CsvAndSummary) {
  const auto search = find_dirichlet_paths(make(3.0, 4), 3, {}, false);
  ASSERT_FALSE(search.paths.empty());
  std::ostringstream os;
  write_path_csv(os, search.paths[0]);
  EXPECT_EQ(os.str().substr(0, 8), "x,v,v_x\n");
  const auto j = path_summary(search.paths[0]);
  EXPECT_EQ(j["junctions"].size(), 7u);
  EXPECT_EQ(j["strips"].size(), 5u);
}
