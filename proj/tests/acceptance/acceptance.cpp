// Acceptance suite. Prints one PASS/FAIL line per criterion plus "info"
// lines with the measured quantities; exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "../oracles.hpp"
#include "romlab/blocked_path.hpp"
#include "romlab/discretization.hpp"
#include "romlab/ensemble.hpp"
#include "romlab/parabolic_solver.hpp"
#include "romlab/probability_lab.hpp"

using namespace romlab;

namespace {

int failures = 0;

void verdict(int id, const char *name, bool ok, const std::string &detail) {
  std::printf("criterion %d [%s]: %s  %s\n", id, name, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  failures += ok ? 0 : 1;
}

template <class... A> std::string fmt(const char *f, A... a) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

void info(const std::string &s) {
  std::printf("  info: %s\n", s.c_str());
  std::fflush(stdout);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

GridFunction zero_data(int N, double delta, double h) {
  return GridFunction::dirichlet_zero(
      N, delta, static_cast<std::size_t>(std::lround(2 * (N - delta) / h)));
}

// ---------------------------------------------------------------------------

void lemma_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  const int N = 8, seeds = 200;
  const PathOptions opt;
  const double tol = lemma_tolerance(opt.tol_ode);
  struct Tally {
    int paths = 0, unvalidated = 0, a = 0, b = 0, c_lo = 0, c_hi = 0, c_off = 0, interp = 0;
    double min_a = INFINITY, min_b = INFINITY, min_c_lo = INFINITY, min_c_hi = INFINITY;
    double min_interp = INFINITY;
    bool none = false;
  };
  const auto tallies = run_indexed<Tally>(seeds, default_workers(), [&](std::size_t t) {
    FieldConfig c;
    c.delta = 0.1;
    c.epsilon = 0.05;
    c.lambda0 = 1.0;
    c.F = 3.0;
    c.seed = rng::split_seed(2024, t);
    const ObstacleGrid g(c);
    const auto search = find_dirichlet_paths(g, N, opt, false);
    Tally y;
    y.none = search.paths.empty();
    for (const auto &p : search.paths) {
      const auto d = discretize(p);
      const auto r = verify_lemma_bounds(p, d, g, tol);
      const auto ip = verify_interpolation_bound(p, d, tol);
      ++y.paths;
      y.unvalidated += !p.validated;
      y.a += r.violations_a;
      y.b += r.violations_b;
      y.c_lo += r.violations_c_lo;
      y.c_hi += r.violations_c_hi;
      y.c_off += r.violations_c_lo_offset;
      y.interp += !ip.pass();
      y.min_a = std::min(y.min_a, r.min_slack_a);
      y.min_b = std::min(y.min_b, r.min_slack_b);
      y.min_c_lo = std::min(y.min_c_lo, r.min_slack_c_lo);
      y.min_c_hi = std::min(y.min_c_hi, r.min_slack_c_hi);
      y.min_interp = std::min({y.min_interp, ip.min_slack_w, ip.min_slack_w_bar});
    }
    return y;
  });
  Tally s;
  int no_path = 0;
  for (const auto &y : tallies) {
    s.paths += y.paths;
    s.unvalidated += y.unvalidated;
    s.a += y.a;
    s.b += y.b;
    s.c_lo += y.c_lo;
    s.c_hi += y.c_hi;
    s.c_off += y.c_off;
    s.interp += y.interp;
    s.min_a = std::min(s.min_a, y.min_a);
    s.min_b = std::min(s.min_b, y.min_b);
    s.min_c_lo = std::min(s.min_c_lo, y.min_c_lo);
    s.min_c_hi = std::min(s.min_c_hi, y.min_c_hi);
    s.min_interp = std::min(s.min_interp, y.min_interp);
    no_path += y.none;
  }
  const double wall = seconds_since(t0);
  const bool ok = no_path == 0 && s.unvalidated == 0 && s.a == 0 && s.b == 0 &&
                  s.c_lo == 0 && s.c_hi == 0 && s.interp == 0 && wall < 300;
  verdict(1, "lemma suite", ok,
          fmt("%d realizations, %d paths, violations: tangent %d, slope-gain %d, "
              "window lower %d, window upper %d, interpolation %d",
              seeds, s.paths, s.a, s.b, s.c_lo, s.c_hi, s.interp));
  info(fmt("tolerance %.3g; min slacks: tangent %.3g, slope-gain %.3g, window lower %.3g, "
           "window upper %.3g, interpolation %.3g",
           tol, s.min_a, s.min_b, s.min_c_lo, s.min_c_hi, s.min_interp));
  info(fmt("window lower bound with the rounding offset (1 + 4 delta): %d violations", s.c_off));
  info(fmt("realizations without a path: %d; unvalidated paths: %d; wall time %.1f s",
           no_path, s.unvalidated, wall));
}

// ---------------------------------------------------------------------------

void closed_form_oracle() {
  const double F = 2.0, delta = 0.1, eps = 0.05, h = 0.05;
  const int N = 4;
  FieldConfig c;
  c.F = F;
  c.delta = delta;
  c.epsilon = eps;
  const ObstacleGrid free_unit = ObstacleGrid(c).with_cap(0.0).with_unit_cutoff();

  const auto search = find_dirichlet_paths(free_unit, N, {}, false);
  double ode_err = INFINITY;
  if (search.paths.size() == 1) {
    ode_err = 0.0;
    for (const auto &s : search.paths[0].samples)
      if (s.x >= -N + delta - 1e-12 && s.x <= N - delta + 1e-12)
        ode_err = std::max(ode_err, std::abs(s.v - oracle::parabola(F, N, delta, s.x)));
  }

  StationaryOptions so;
  so.tol = 1e-10;
  so.scheme = Scheme::semi_implicit;
  const auto res = stationary_limit(free_unit, Problem::auxiliary, zero_data(N, delta, h), 0.01, so);
  double pde_err = 0.0;
  for (std::size_t k = 0; k < res.u.values.size(); ++k)
    pde_err = std::max(pde_err, std::abs(res.u.values[k] - oracle::parabola(F, N, delta, res.u.x(k))));

  const PathIntegrator integ{ObstacleGrid(c)};
  const double F_hat = integ.F_hat();
  const double ref = F * oracle::simpson([&](double x) { return oracle::chi(x, delta, eps); },
                                         delta, 1 - delta, 400000);
  const bool in_range = F_hat >= F * (1 - 2 * (delta + eps)) - 1e-10 &&
                        F_hat <= F * (1 - 2 * delta) + 1e-10;
  const bool ok = search.paths.size() == 1 && ode_err <= 1e-8 && res.stationary() &&
                  pde_err <= 10 * h * h && in_range && std::abs(F_hat - ref) <= 1e-10;
  verdict(2, "closed-form oracle", ok,
          fmt("shooting error %.2e (limit 1e-8), PDE error %.2e (limit %.2e), F_hat %.12f in "
              "[%.4f, %.4f]",
              ode_err, pde_err, 10 * h * h, F_hat, F * (1 - 2 * (delta + eps)),
              F * (1 - 2 * delta)));
  info(fmt("paths found %zu; PDE status %s at t = %.1f; |F_hat - Simpson| = %.2e",
           search.paths.size(), res.stationary() ? "stationary" : "not stationary", res.t,
           std::abs(F_hat - ref)));
}

// ---------------------------------------------------------------------------

void probability_core() {
  bool ok = true;
  // Brute-force normalization at N = 1 and N = 2.
  const RateParams rp;
  struct Case {
    double lambda1, F_bar;
    int N, radius;
  };
  for (const Case cs : {Case{rp.l1(), 1.05, 1, 3}, Case{rp.l1(), 1.05, 1, 3000},
                        Case{1.0, 1.05, 2, 150}}) {
    const AuxMeasure m(cs.lambda1, cs.F_bar, 0.1, cs.N);
    const double mass = brute_force_mass(m, cs.radius);
    const int sites = 2 * cs.N - 1;
    // Omitted mass is at most 1 - (1 - tail)^sites.
    const double bound = 1.0 - std::pow(1.0 - truncation_tail(m, cs.radius), sites);
    const bool pass = mass <= 1.0 + 1e-12 && 1.0 - mass <= bound + 1e-12;
    ok = ok && pass;
    info(fmt("normalization N=%d lambda1=%.4f radius %d: mass %.12f, omitted %.3e, bound %.3e",
             cs.N, cs.lambda1, cs.radius, mass, 1.0 - mass, bound));
  }
  // Laplace formulas against 1e6 samples.
  rng::CounterStream rs(31337);
  const int n = 1000000;
  struct Mom {
    double lambda0, lambda;
    int L;
    bool normalized;
  };
  for (const Mom mm : {Mom{1.0, 0.3, 1, false}, Mom{1.0, 0.3, 3, false},
                       Mom{2.0, 0.5, 2, false}, Mom{1.0, 0.8, 5, true}}) {
    double sum = 0.0, sq = 0.0;
    for (int k = 0; k < n; ++k) {
      double s = 0.0;
      for (int i = 0; i < mm.L; ++i)
        s += rs.exponential(mm.lambda0);
      const double y = std::exp(mm.lambda * (mm.normalized ? s / mm.L : s));
      sum += y;
      sq += y * y;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sq / n - mean * mean) / n);
    const double exact = mm.normalized ? std::exp(log_normalized_moment(mm.lambda0, mm.lambda, mm.L))
                                       : laplace_moment(mm.lambda0, mm.lambda, mm.L);
    const bool pass = std::abs(mean - exact) <= 3 * se;
    ok = ok && pass;
    info(fmt("Laplace lambda0=%.1f lambda=%.2f L=%d%s: MC %.6f, exact %.6f, sigma %.2e",
             mm.lambda0, mm.lambda, mm.L, mm.normalized ? " (normalized)" : "", mean, exact, se));
  }
  // Rate function.
  const double mu = 1.0;
  const bool zero = rate_function(mu, mu) == 0.0;
  bool convex = true;
  for (int k = 1; k <= 100; ++k) {
    const double F = 0.1 * k, hh = 1e-3;
    convex = convex && rate_function(F + hh, mu) - 2 * rate_function(F, mu) +
                               rate_function(F - hh, mu) > 0.0;
  }
  ok = ok && zero && convex;
  verdict(3, "probability core", ok,
          fmt("normalization, Laplace MC and rate function checks; I(mu) = %g, convex on 100 points: %s",
              rate_function(mu, mu), convex ? "yes" : "no"));
}

// ---------------------------------------------------------------------------

void exponential_decay() {
  const auto t0 = std::chrono::steady_clock::now();
  CrossingParams p;
  p.field.F = 50.0;
  p.field.delta = 0.1;
  p.field.lambda0 = 1.0;
  p.K = 1.0;
  const std::vector<int> Ns{6, 10, 14, 18};
  const auto ex = mc_crossing_probability(p, Ns, 400, 4242, default_workers());
  bool monotone = true;
  for (std::size_t k = 1; k < ex.estimates.size(); ++k)
    monotone = monotone && ex.estimates[k].p_hat <= ex.estimates[k - 1].p_hat;
  const bool slope_ok = !ex.fit.insufficient && ex.fit.slope < 0.0 && ex.fit.slope_ci.hi < 0.0;
  const double wall = seconds_since(t0);
  verdict(4, "exponential decay", slope_ok && monotone && wall < 1800,
          ex.fit.insufficient
              ? fmt("fit impossible: %s", ex.fit.note.c_str())
              : fmt("slope %.4f, 95%% CI [%.4f, %.4f], p_hat nonincreasing: %s", ex.fit.slope,
                    ex.fit.slope_ci.lo, ex.fit.slope_ci.hi, monotone ? "yes" : "no"));
  std::size_t k = 0;
  for (const auto &e : ex.estimates) {
    double lo = INFINITY, hi = -INFINITY;
    int nonneg = 0;
    for (std::size_t s = 0; s < 400; ++s) {
      const auto &o = ex.outcomes[k++];
      nonneg += o.nonnegative_paths > 0;
      if (std::isfinite(o.max_center)) {
        lo = std::min(lo, o.max_center);
        hi = std::max(hi, o.max_center);
      }
    }
    info(fmt("N=%d: crossed %llu/%llu (vacuous %llu), p_hat %.4f, CI [%.4f, %.4f]; "
             "v_bar(0) range [%.1f, %.1f] vs triangle top %.0f",
             e.N, static_cast<unsigned long long>(e.k_crossed),
             static_cast<unsigned long long>(e.n), static_cast<unsigned long long>(e.vacuous),
             e.p_hat, e.ci.lo, e.ci.hi, lo, hi, p.K * (e.N - 1)));
  }
  info(fmt("wall time %.1f s with %u workers", wall, default_workers()));
}

// ---------------------------------------------------------------------------

void depinning() {
  const auto t0 = std::chrono::steady_clock::now();
  const int N = 8, samples = 100;
  const double delta = 0.1, h = 0.05, dt = 0.002, K = 1.0;
  const std::vector<double> Fs{0.0, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0, 50.0};
  const auto init = zero_data(N, delta, h);
  const auto pinned = run_indexed<int>(Fs.size() * samples, default_workers(), [&](std::size_t t) {
    FieldConfig c;
    c.F = Fs[t / samples];
    c.seed = rng::split_seed(777, t % samples); // shared across F
    StationaryOptions so;
    so.tol = 1e-6;
    so.height_limit = K * N;
    so.scheme = Scheme::semi_implicit;
    return stationary_limit(ObstacleGrid(c), Problem::auxiliary, init, dt, so).stationary() ? 1 : 0;
  });
  std::vector<double> frac(Fs.size(), 0.0);
  int violations = 0;
  std::string table;
  for (std::size_t f = 0; f < Fs.size(); ++f) {
    for (int s = 0; s < samples; ++s) {
      frac[f] += pinned[f * samples + s];
      if (f > 0 && pinned[f * samples + s] && !pinned[(f - 1) * samples + s])
        ++violations;
    }
    frac[f] /= samples;
    table += fmt("%s%g:%.2f", f ? ", " : "", Fs[f], frac[f]);
  }
  const bool ok = frac.front() == 1.0 && frac.back() <= 0.05 && violations == 0;
  verdict(5, "depinning sweep", ok,
          fmt("pinned fraction F=0: %.2f, F=50: %.2f, coupling violations %d", frac.front(),
              frac.back(), violations));
  info("pinned fraction by F: " + table);
  info(fmt("N=%d, height limit %.0f, h=%.2f, dt=%.3f, wall time %.1f s", N, K * N, h, dt,
           seconds_since(t0)));
}

// ---------------------------------------------------------------------------

void comparison_principles() {
  const int N = 4;
  const double h = 0.02, dt = default_dt_factor * h * h, t_end = 2.0, tol = 10 * h * h;
  const auto init = zero_data(N, 0.1, h);
  double worst_aux = -INFINITY, worst_cap = -INFINITY, worst_inc = INFINITY;
  int bad = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    FieldConfig c;
    c.F = 3.0;
    c.mean_zero = true;
    c.seed = rng::split_seed(55, seed);
    const ObstacleGrid g(c);
    SolverOptions o;
    o.snapshot_every = 0.05;
    const auto aux = evolve(g, Problem::auxiliary, init, t_end, dt, o);
    const auto orig = evolve(g, Problem::original, init, t_end, dt, o);
    const auto r1 = comparison_check(aux, orig, tol);
    worst_aux = std::max(worst_aux, r1.worst);
    bad += !r1.pass;
    const auto c1 = truncated_evolve(g, 1.0, Problem::original, init, t_end, dt, o);
    const auto c2 = truncated_evolve(g, 2.0, Problem::original, init, t_end, dt, o);
    const auto r2 = comparison_check(c2, c1, tol);
    const auto r3 = comparison_check(orig, c2, tol);
    worst_cap = std::max({worst_cap, r2.worst, r3.worst});
    bad += !r2.pass + !r3.pass;
    // Every step of the auxiliary run from zero data.
    SolverOptions every;
    every.snapshot_every = dt;
    const auto fine = evolve(g, Problem::auxiliary, init, t_end, dt, every);
    for (std::size_t s = 1; s < fine.snapshots.size(); ++s) {
      const auto &a = fine.snapshots[s - 1].u.values;
      const auto &b = fine.snapshots[s].u.values;
      for (std::size_t k = 0; k < a.size(); ++k)
        worst_inc = std::min(worst_inc, b[k] - a[k]);
    }
  }
  const bool ok = bad == 0 && worst_inc >= -1e-12;
  verdict(6, "comparison principles", ok,
          fmt("10 seeds: max(aux - original) %.2e, max cap violation %.2e (tol %.1e), "
              "min time increment %.2e",
              worst_aux, worst_cap, tol, worst_inc));
}

// ---------------------------------------------------------------------------

void exact_identities() {
  std::mt19937_64 gen(6101);
  std::uniform_int_distribution<int> len(3, 32);
  std::uniform_int_distribution<std::int64_t> val(-1000000000, 1000000000);
  std::uniform_int_distribution<std::int64_t> pos(0, 1000000);
  int bad_id = 0, bad_avg = 0;
  for (int n = 0; n < 1000; ++n) {
    std::vector<std::int64_t> z(static_cast<std::size_t>(len(gen)));
    for (auto &x : z)
      x = val(gen);
    bad_id += !check_discrete_identities(z).all();
    std::vector<std::int64_t> a(static_cast<std::size_t>(len(gen)));
    for (auto &x : a)
      x = pos(gen);
    bad_avg += !check_averaging_identity(a).holds();
  }
  verdict(7, "exact identities", bad_id == 0 && bad_avg == 0,
          fmt("1000 sequences each: summation identities failed on %d, averaging identity on %d",
              bad_id, bad_avg));
}

} // namespace

int main() {
  std::printf("romlab acceptance suite (workers: %u)\n", default_workers());
  lemma_suite();
  closed_form_oracle();
  probability_core();
  exponential_decay();
  depinning();
  comparison_principles();
  exact_identities();
  std::printf("%d of 7 criteria failed\n", failures);
  return failures ? 1 : 0;
}
