#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <vector>

#include <nlohmann/json.hpp>

#include "romlab/errors.hpp"
#include "romlab/obstacle_field.hpp"

// Stationary blocked paths of the auxiliary problem.
//
// A blocked path is C^1 and solves
//   v'' = -F chi(x)                     on the gaps (i + delta, i + 1 - delta)
//   v'' = sum_j l(i, j) phi_ij(x, v)    on the strips (i - delta, i + delta).
// Gaps are linear ODEs and are integrated by quadrature of the known
// right-hand side. Strips are integrated with classical RK4; outside the
// obstacle bands the strip solution is a straight line, which is followed
// exactly up to the next band edge.

namespace romlab {

struct PathOptions {
  double tol_ode = 1e-8;    // Richardson bound, mixed abs/rel, per strip
  double tol_shoot = 1e-8;  // on the terminal value v(N - delta)
  double tol_match = 1e-9;  // relative gap-junction residual
  double step = 0.0;        // base strip step; 0 selects delta / 50
  double slope_max = 0.0;   // 0 selects 4 max(F, 1) N
  int band_steps = 32;      // RK4 steps per band crossing at the local slope
  int coarse_factor = 4;    // scan resolution relative to the accepted pass
  int gap_samples = 8;      // dense samples per gap
  int scan_points = 64;     // default slope scan resolution
  int max_refinements = 6;  // step halvings before giving up on a strip
};

/// Values and slopes at the two edges of column i: `in` at i - delta,
/// `out` at i + delta.
struct Junction {
  double v_in = 0.0;
  double slope_in = 0.0;
  double v_out = 0.0;
  double slope_out = 0.0;
};

struct PathSample {
  double x;
  double v;
  double vx;
};

struct StripDiagnostics {
  std::int64_t column = 0;
  double k = 0.0; // slope gain v_x(i + delta) - v_x(i - delta)
  double M = 0.0; // max(|v_x(i - delta)|, |v_x(i + delta)|)
  double error_estimate = 0.0;
  double v_min = 0.0;
  double v_max = 0.0;
  std::uint64_t steps = 0;
  /// (row, S_j): Lebesgue measure of {x in strip : |v(x) - (row + 1/2)| <= delta}.
  std::vector<std::pair<std::int64_t, double>> sojourn;
};

struct BlockedPath {
  int N = 0;
  double delta = 0.0;
  double F = 0.0;
  double F_hat = 0.0;
  std::uint64_t seed = 0;
  double slope0 = 0.0;
  double terminal = 0.0;            // v(N - delta)
  std::vector<Junction> junctions;  // columns -N .. N
  std::vector<PathSample> samples;  // dense samples on [-N - delta, N + delta]
  std::vector<StripDiagnostics> strips; // columns -N + 1 .. N - 1
  double junction_residual = 0.0;
  double ode_error = 0.0;
  double strip_step = 0.0;
  bool validated = false;

  const Junction &at(int column) const {
    return junctions.at(static_cast<std::size_t>(column + N));
  }
  /// Minimum of v over [-N + delta, N - delta].
  double min_value() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto &s : samples)
      if (s.x >= -N + delta - 1e-12 && s.x <= N - delta + 1e-12)
        m = std::min(m, s.v);
    for (const auto &d : strips)
      m = std::min(m, d.v_min);
    return m;
  }
  /// Nonnegative up to `tol`, which must absorb the shooting tolerance at the
  /// right end.
  bool nonnegative(double tol = 1e-6) const { return min_value() >= -tol; }
};

struct GapResult {
  double v1;
  double slope1;
};

struct StripResult {
  double v1;
  double slope1;
  StripDiagnostics diagnostics;
};

namespace detail {

/// Integration state across one strip.
struct StripRecorder {
  std::vector<PathSample> *samples = nullptr;
  std::map<std::int64_t, double> sojourn;
  double v_min = std::numeric_limits<double>::infinity();
  double v_max = -std::numeric_limits<double>::infinity();
  std::uint64_t steps = 0;

  double spacing = 0.0; // minimum x distance between stored samples
  double last_x = -std::numeric_limits<double>::infinity();

  void sample(double x, double v, double s, bool force = false) {
    v_min = std::min(v_min, v);
    v_max = std::max(v_max, v);
    if (samples && (force || x - last_x >= spacing)) {
      samples->push_back({x, v, s});
      last_x = x;
    }
  }

  /// Adds the part of a step of length hx, with v moving linearly from va to
  /// vb, spent inside each band [c - delta, c + delta].
  void occupy(double va, double vb, double hx, double delta) {
    const double lo = std::min(va, vb);
    const double hi = std::max(va, vb);
    for (auto r = ObstacleGrid::row_of(lo - delta);
         r <= ObstacleGrid::row_of(hi + delta); ++r) {
      const double c = ObstacleGrid::row_center(r);
      const double a = std::max(lo, c - delta);
      const double b = std::min(hi, c + delta);
      if (b < a)
        continue;
      double frac;
      if (hi - lo <= 0.0)
        frac = 1.0;
      else
        frac = (b - a) / (hi - lo);
      if (frac > 0.0)
        sojourn[r] += frac * hx;
    }
  }
};

} // namespace detail

/// Integrates gaps and strips for one obstacle grid. Holds the gap constants
/// F-hat = F int chi and W = F int int chi, which are independent of the gap.
class PathIntegrator {
public:
  PathIntegrator(const ObstacleGrid &grid, PathOptions opt = {})
      : grid_(grid), opt_(opt) {
    const Cutoff &chi = grid_.cutoff();
    F_hat_ = grid_.F() * chi.gap_integral();
    W_ = grid_.F() * chi.gap_moment();
    if (opt_.step <= 0.0)
      opt_.step = grid_.delta() / 50.0;
  }

  const ObstacleGrid &grid() const noexcept { return grid_; }
  const PathOptions &options() const noexcept { return opt_; }
  double F_hat() const noexcept { return F_hat_; }
  double gap_moment() const noexcept { return W_; }

  double slope_max(int N) const noexcept {
    return opt_.slope_max > 0.0 ? opt_.slope_max
                                : 4.0 * std::max(grid_.F(), 1.0) * N;
  }
  double v_max(int N) const noexcept {
    return 10.0 * std::max(grid_.F(), 1.0) * N * N;
  }

  /// Exact gap transfer from x_start = i + delta to i + 1 - delta.
  GapResult gap(double x_start, double v0, double slope0,
                std::vector<PathSample> *samples = nullptr) const {
    const double delta = grid_.delta();
    const double cell = std::nearbyint(x_start - delta);
    if (std::abs(x_start - cell - delta) > 1e-9)
      throw DomainError("gap must start at i + delta");
    const double len = 1.0 - 2.0 * delta;
    if (samples) {
      const Cutoff &chi = grid_.cutoff();
      const int m = std::max(opt_.gap_samples, 2);
      for (int k = 0; k < m; ++k) {
        const double u = len * k / (m - 1);
        const auto prim = chi.gap_primitive(u);
        samples->push_back({x_start + u, v0 + u * slope0 - grid_.F() * prim.bend,
                            slope0 - grid_.F() * prim.drop});
      }
    }
    return {v0 + len * slope0 - W_, slope0 - F_hat_};
  }

  /// RK4 through the strip around `column` with base step `step`; also
  /// returns a Richardson estimate against step / 2 when `check` is set.
  StripResult strip(std::int64_t column, double v0, double slope0, double step,
                    bool check, std::vector<PathSample> *samples = nullptr,
                    bool diagnostics = false) const {
    detail::StripRecorder rec;
    rec.samples = samples;
    rec.spacing = grid_.delta() / 50.0;
    auto [v1, s1] = strip_pass(column, v0, slope0, step,
                               diagnostics || samples ? &rec : nullptr);
    StripResult out{v1, s1, {}};
    out.diagnostics.column = column;
    out.diagnostics.k = s1 - slope0;
    out.diagnostics.M = std::max(std::abs(slope0), std::abs(s1));
    if (diagnostics || samples) {
      out.diagnostics.v_min = rec.v_min;
      out.diagnostics.v_max = rec.v_max;
      out.diagnostics.steps = rec.steps;
      out.diagnostics.sojourn.assign(rec.sojourn.begin(), rec.sojourn.end());
    } else {
      out.diagnostics.v_min = std::min(v0, v1);
      out.diagnostics.v_max = std::max(v0, v1);
    }
    if (check) {
      auto [v2, s2] = strip_pass(column, v0, slope0, 0.5 * step, nullptr);
      out.diagnostics.error_estimate =
          std::max(std::abs(v2 - v1) / (1.0 + std::abs(v2)),
                   std::abs(s2 - s1) / (1.0 + std::abs(s2)));
      if (out.diagnostics.error_estimate > opt_.tol_ode)
        throw StepTooCoarse(out.diagnostics.error_estimate, opt_.tol_ode);
    }
    return out;
  }

private:
  struct State {
    double v;
    double s;
  };

  /// One RK4 pass across [column - delta, column + delta].
  State strip_pass(std::int64_t column, double v, double s, double step,
                   detail::StripRecorder *rec) const {
    const double delta = grid_.delta();
    const double F = grid_.F();
    const Cutoff &chi = grid_.cutoff();
    const BumpProfile &bump = grid_.bump();
    const double c = static_cast<double>(column);
    const double end = c + delta;
    double x = c - delta;
    // With the unit cutoff the strip equation carries the -F term and the
    // path is not piecewise linear between bands.
    const bool linear_between_bands = !chi.unit || F == 0.0;

    std::int64_t cached_row = std::numeric_limits<std::int64_t>::min();
    double cached_strength = 0.0;
    auto accel = [&](double xx, double vv) {
      double a = chi.unit ? -F : -F * chi(xx);
      const auto row = ObstacleGrid::row_of(vv);
      const double ds = vv - ObstacleGrid::row_center(row);
      if (std::abs(ds) < delta) {
        if (row != cached_row) {
          cached_row = row;
          cached_strength = grid_.strength(column, row);
        }
        a += cached_strength * bump(xx - c, ds);
      }
      return a;
    };
    // Bands of zero strength are crossed in free flight as well.
    auto live_band = [&](double vv) {
      const auto row = ObstacleGrid::row_of(vv);
      return std::abs(vv - ObstacleGrid::row_center(row)) < delta &&
             grid_.strength(column, row) != 0.0;
    };

    if (rec)
      rec->sample(x, v, s, true);
    bool force_rk = false;
    while (x < end) {
      if (linear_between_bands && !force_rk && !live_band(v)) {
        // Straight line to the next band edge or the strip end.
        double x_next = end;
        double edge = v;
        if (s != 0.0) {
          const double center = ObstacleGrid::row_center(ObstacleGrid::row_of(v));
          if (s > 0.0)
            edge = v < center - delta ? center - delta : center + 1.0 - delta;
          else
            edge = v > center + delta ? center + delta : center - 1.0 + delta;
          x_next = x + (edge - v) / s;
        }
        const double v_start = v, x_start = x;
        if (x_next >= end) {
          v += s * (end - x);
          x = end;
        } else {
          v = edge;
          x = x_next;
          const double inside = edge + (s > 0.0 ? delta : -delta);
          force_rk = grid_.strength(column, ObstacleGrid::row_of(inside)) != 0.0;
        }
        if (rec) {
          rec->occupy(v_start, v, x - x_start, delta);
          rec->sample(x, v, s, x == end);
        }
        continue;
      }
      force_rk = false;
      // The band limit scales with the step so that halving `step` halves
      // every RK4 step of the pass.
      double h = step;
      if (s != 0.0)
        h = std::min(h, 2.0 * delta * step /
                            (opt_.band_steps * opt_.step * std::abs(s)));
      h = std::min(h, end - x);
      const double half = 0.5 * h;
      const double a1 = accel(x, v);
      const double v2 = v + half * s, s2 = s + half * a1;
      const double a2 = accel(x + half, v2);
      const double v3 = v + half * s2, s3 = s + half * a2;
      const double a3 = accel(x + half, v3);
      const double v4 = v + h * s3, s4 = s + h * a3;
      const double a4 = accel(x + h, v4);
      const double v_new = v + h / 6.0 * (s + 2.0 * s2 + 2.0 * s3 + s4);
      const double s_new = s + h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
      if (rec) {
        rec->occupy(v, v_new, h, delta);
        ++rec->steps;
      }
      v = v_new;
      s = s_new;
      x = (end - x <= h) ? end : x + h;
      if (rec)
        rec->sample(x, v, s, x == end);
    }
    return {v, s};
  }

  ObstacleGrid grid_;
  PathOptions opt_;
  double F_hat_ = 0.0;
  double W_ = 0.0;
};

/// Free-function form of the gap transfer.
inline GapResult integrate_gap(const ObstacleGrid &grid, double x_start,
                               double v0, double slope0) {
  return PathIntegrator(grid).gap(x_start, v0, slope0);
}

/// Free-function form of the strip transfer with Richardson check.
inline StripResult integrate_strip(const ObstacleGrid &grid,
                                   std::int64_t column, double v0,
                                   double slope0, double step,
                                   const PathOptions &opt = {}) {
  if (!(step > 0.0) || step > grid.delta() / 50.0 * (1.0 + 1e-12))
    throw DomainError("strip step must lie in (0, delta / 50]");
  return PathIntegrator(grid, opt).strip(column, v0, slope0, step, true,
                                         nullptr, true);
}

/// Terminal value of a shot, with Blowup mapped to a signed infinity.
struct ShotValue {
  double terminal;
  bool escaped;
};

class Shooter {
public:
  Shooter(const ObstacleGrid &grid, int N, PathOptions opt = {})
      : integ_(grid, opt), coarse_(grid, coarse_options(integ_.options())),
        N_(N) {
    if (N < 1)
      throw ConfigError("N", "must be at least 1");
  }

  const PathIntegrator &integrator() const noexcept { return integ_; }
  int N() const noexcept { return N_; }

  /// Terminal value v(N - delta) of the path leaving (-N + delta, 0) with
  /// slope0. No diagnostics, no Richardson check.
  /// With `coarse` set the strips use the scan integrator, whose steps are
  /// coarse_factor times longer.
  double terminal(double slope0, double step, bool coarse = false) const {
    const PathIntegrator &integ = coarse ? coarse_ : integ_;
    if (coarse)
      step *= coarse_.options().step / integ_.options().step;
    const double delta = integ_.grid().delta();
    const double vmax = integ_.v_max(N_);
    double v = 0.0, s = slope0;
    for (int g = -N_; g <= N_ - 1; ++g) {
      auto gr = integ.gap(g + delta, v, s);
      v = gr.v1;
      s = gr.slope1;
      if (std::abs(v) > vmax)
        throw Blowup(g + 1 - delta, v);
      if (g + 1 <= N_ - 1) {
        auto sr = integ.strip(g + 1, v, s, step, false);
        v = sr.v1;
        s = sr.slope1;
        if (std::abs(v) > vmax)
          throw Blowup(g + 1 + delta, v);
      }
    }
    return v;
  }

  ShotValue evaluate(double slope0, double step, bool coarse = false) const {
    try {
      return {terminal(slope0, step, coarse), false};
    } catch (const Blowup &b) {
      return {b.v() > 0 ? std::numeric_limits<double>::infinity()
                        : -std::numeric_limits<double>::infinity(),
              true};
    }
  }

  /// Full path with dense samples, per-strip diagnostics and (when
  /// `check` is set) Richardson validation of every strip.
  BlockedPath shoot(double slope0, double step, bool check = true) const {
    const double smax = integ_.slope_max(N_);
    if (std::abs(slope0) > smax * (1.0 + 1e-12))
      throw DomainError("|slope0| exceeds slope_max");
    const ObstacleGrid &grid = integ_.grid();
    const double delta = grid.delta();
    const double vmax = integ_.v_max(N_);
    BlockedPath p;
    p.N = N_;
    p.delta = delta;
    p.F = grid.F();
    p.F_hat = integ_.F_hat();
    p.seed = grid.config().seed;
    p.slope0 = slope0;
    p.strip_step = step;
    p.junctions.resize(2 * N_ + 1);

    double v = 0.0, s = slope0;
    // Left collar: v(x) = slope0 (x + N - delta).
    p.junctions.front() = {-2.0 * delta * slope0, slope0, 0.0, slope0};
    p.samples.push_back({-N_ - delta, -2.0 * delta * slope0, slope0});
    for (int g = -N_; g <= N_ - 1; ++g) {
      auto gr = integ_.gap(g + delta, v, s, &p.samples);
      v = gr.v1;
      s = gr.slope1;
      if (std::abs(v) > vmax)
        throw Blowup(g + 1 - delta, v);
      if (g + 1 <= N_ - 1) {
        auto &j = p.junctions[static_cast<std::size_t>(g + 1 + N_)];
        j.v_in = v;
        j.slope_in = s;
        auto sr = integ_.strip(g + 1, v, s, step, check, &p.samples, true);
        v = sr.v1;
        s = sr.slope1;
        j.v_out = v;
        j.slope_out = s;
        p.ode_error = std::max(p.ode_error, sr.diagnostics.error_estimate);
        p.strips.push_back(std::move(sr.diagnostics));
        if (std::abs(v) > vmax)
          throw Blowup(g + 1 + delta, v);
      }
    }
    p.terminal = v;
    // Right collar: linear continuation with the boundary slope.
    p.junctions.back() = {v, s, v + 2.0 * delta * s, s};
    p.samples.push_back({N_ + delta, v + 2.0 * delta * s, s});
    if (check)
      validate(p);
    return p;
  }

  /// Re-checks a path against the blocked-path equations: gap junctions via
  /// the closed-form gap transfer, strips via independent re-integration with
  /// half the step, convexity on every strip.
  void validate(BlockedPath &p) const {
    const double delta = p.delta;
    const Cutoff &chi = integ_.grid().cutoff();
    // Closed-form gap integrals of the smoothstep cutoff.
    const auto prim = chi.gap_primitive(1.0 - 2.0 * delta);
    const double drop = prim.drop, bend = prim.bend;
    const double F = integ_.grid().F();
    double residual = 0.0;
    for (int g = -N_; g <= N_ - 1; ++g) {
      const Junction &a = p.at(g);
      const Junction &b = p.at(g + 1);
      const double v_pred = a.v_out + (1.0 - 2.0 * delta) * a.slope_out - F * bend;
      const double s_pred = a.slope_out - F * drop;
      residual = std::max(residual,
                          std::max(std::abs(b.v_in - v_pred) / (1.0 + std::abs(v_pred)),
                                   std::abs(b.slope_in - s_pred) / (1.0 + std::abs(s_pred))));
    }
    bool gaps_ok = residual <= integ_.options().tol_match;
    bool convex = true;
    for (int i = -N_ + 1; i <= N_ - 1; ++i) {
      const Junction &j = p.at(i);
      auto fine = integ_.strip(i, j.v_in, j.slope_in, 0.5 * p.strip_step, false);
      residual = std::max(
          residual, std::max(std::abs(fine.v1 - j.v_out) / (1.0 + std::abs(fine.v1)),
                             std::abs(fine.slope1 - j.slope_out) /
                                 (1.0 + std::abs(fine.slope1))));
      if (!chi.unit && j.slope_out < j.slope_in - integ_.options().tol_ode)
        convex = false;
    }
    p.junction_residual = residual;
    p.validated = gaps_ok && convex && p.ode_error <= integ_.options().tol_ode;
  }

  /// Shoots with Richardson validation, halving the step on StepTooCoarse.
  /// Returns the path and the step it was accepted at.
  BlockedPath shoot_refined(double slope0) const {
    double step = integ_.options().step;
    for (int r = 0;; ++r) {
      try {
        return shoot(slope0, step, true);
      } catch (const StepTooCoarse &) {
        if (r >= integ_.options().max_refinements)
          throw;
        step *= 0.5;
      }
    }
  }

  /// Slope at which the obstacle-free path returns to zero. Obstacles only
  /// add convexity, so every Dirichlet root lies at or below it.
  double free_root() const {
    const Shooter bare(integ_.grid().with_cap(0.0), N_, integ_.options());
    const double step = integ_.options().step;
    const double t0 = bare.terminal(0.0, step);
    const double t1 = bare.terminal(1.0, step);
    return -t0 / (t1 - t0);
  }

  const ObstacleGrid &grid() const noexcept { return integ_.grid(); }

private:
  static PathOptions coarse_options(PathOptions o) {
    const int f = std::max(o.coarse_factor, 1);
    o.step *= f;
    o.band_steps = std::max(4, o.band_steps / f);
    return o;
  }

  PathIntegrator integ_;
  PathIntegrator coarse_;
  int N_;
};

/// Ascending scan grid for Dirichlet shooting. The upper end sits just above
/// the obstacle-free root; the lower end is 0 for nonnegative searches and
/// -slope_max otherwise.
inline std::vector<double> default_slope_grid(const Shooter &shooter,
                                              bool nonnegative_only) {
  const double smax = shooter.integrator().slope_max(shooter.N());
  const double root = shooter.free_root();
  double hi = std::min(smax, root + std::max(1.0, 0.05 * std::abs(root)));
  double lo = nonnegative_only ? 0.0 : -smax;
  if (hi <= lo)
    hi = lo + 1.0;
  const int m = std::max(shooter.integrator().options().scan_points, 2);
  std::vector<double> grid(m);
  for (int k = 0; k < m; ++k)
    grid[k] = lo + (hi - lo) * k / (m - 1);
  return grid;
}

struct DirichletSearch {
  std::vector<BlockedPath> paths;
  std::vector<std::pair<double, double>> brackets;
  /// True when the scan found no sign change (NoSolution).
  bool no_solution = false;
  std::uint64_t shots = 0;
};

/// Scans the terminal value over slope_grid; every sign change is refined by
/// safeguarded false position (Illinois) to |v(N - delta)| < tol_shoot and
/// the resulting path rebuilt with full validation.
inline DirichletSearch find_dirichlet_paths(const Shooter &shooter,
                                            const std::vector<double> &slope_grid) {
  if (slope_grid.empty() || !std::is_sorted(slope_grid.begin(), slope_grid.end()))
    throw ConfigError("slope_grid", "must be nonempty and sorted");
  for (double s : slope_grid)
    if (!std::isfinite(s))
      throw ConfigError("slope_grid", "must be finite");
  const PathOptions &opt = shooter.integrator().options();
  DirichletSearch out;

  // Safeguarded false position (Illinois) on a sign-changing bracket.
  auto illinois = [&](double a, double b, double fa, double fb, double step,
                      bool coarse) {
    int side = 0;
    double root = 0.5 * (a + b);
    // Scan roots only seed the polish step, so they stop at a relative
    // tolerance well above the scan integrator's own error.
    double tol = opt.tol_shoot;
    if (coarse) {
      double scale = 1.0;
      if (std::isfinite(fa))
        scale = std::max(scale, std::abs(fa));
      if (std::isfinite(fb))
        scale = std::max(scale, std::abs(fb));
      tol = std::max(tol, 1e-9 * scale);
    }
    for (int it = 0; it < 200; ++it) {
      double m;
      if (std::isfinite(fa) && std::isfinite(fb))
        m = (a * fb - b * fa) / (fb - fa);
      else
        m = 0.5 * (a + b);
      if (!(m > a && m < b))
        m = 0.5 * (a + b);
      const ShotValue fm = shooter.evaluate(m, step, coarse);
      ++out.shots;
      root = m;
      if (std::abs(fm.terminal) < tol)
        break;
      if ((fm.terminal < 0.0) == (fa < 0.0)) {
        a = m;
        fa = fm.terminal;
        if (side == -1 && std::isfinite(fb))
          fb *= 0.5;
        side = -1;
      } else {
        b = m;
        fb = fm.terminal;
        if (side == 1 && std::isfinite(fa))
          fa *= 0.5;
        side = 1;
      }
      if (b - a <= 4.0 * std::numeric_limits<double>::epsilon() *
                       std::max(1.0, std::abs(m)))
        break;
    }
    return root;
  };

  // Re-solves at the accepted resolution starting from a scan root, in a
  // bracket grown geometrically around it inside [lo, hi].
  // `slope` estimates dT/ds0 and centres the first bracket on a Newton step.
  auto polish = [&](double guess, double lo, double hi, double slope,
                    double step) {
    const ShotValue fg = shooter.evaluate(guess, step);
    ++out.shots;
    if (std::abs(fg.terminal) < opt.tol_shoot)
      return guess;
    double centre = guess;
    double w = 1e-9 * std::max(1.0, std::abs(guess));
    if (std::isfinite(fg.terminal) && std::isfinite(slope) && slope != 0.0) {
      const double jump = fg.terminal / slope;
      centre = std::clamp(guess - jump, lo, hi);
      w = std::max(0.25 * std::abs(jump), 1e-12 * std::max(1.0, std::abs(guess)));
    }
    while (true) {
      const double a = std::max(lo, centre - w), b = std::min(hi, centre + w);
      const ShotValue fa = shooter.evaluate(a, step);
      const ShotValue fb = shooter.evaluate(b, step);
      out.shots += 2;
      if (fa.terminal == 0.0)
        return a;
      if (fb.terminal == 0.0)
        return b;
      if ((fa.terminal < 0.0) != (fb.terminal < 0.0))
        return illinois(a, b, fa.terminal, fb.terminal, step, false);
      if (a == lo && b == hi)
        return std::numeric_limits<double>::quiet_NaN();
      w *= 16.0;
    }
  };

  auto solve = [&](double step) {
    std::vector<ShotValue> vals;
    vals.reserve(slope_grid.size());
    for (double s : slope_grid) {
      vals.push_back(shooter.evaluate(s, step, true));
      ++out.shots;
    }
    std::vector<double> roots;
    out.brackets.clear();
    for (std::size_t k = 0; k < slope_grid.size(); ++k) {
      double guess;
      double lo = slope_grid[k > 0 ? k - 1 : 0];
      double hi = slope_grid[k + 1 < slope_grid.size() ? k + 1 : k];
      double dT = std::numeric_limits<double>::quiet_NaN();
      if (vals[k].terminal == 0.0) {
        guess = slope_grid[k];
      } else {
        if (k + 1 == slope_grid.size() || vals[k + 1].terminal == 0.0)
          continue;
        if ((vals[k].terminal < 0.0) == (vals[k + 1].terminal < 0.0))
          continue;
        lo = slope_grid[k];
        dT = (vals[k + 1].terminal - vals[k].terminal) / (hi - lo);
        guess = illinois(slope_grid[k], slope_grid[k + 1], vals[k].terminal,
                         vals[k + 1].terminal, step, true);
      }
      out.brackets.emplace_back(lo, hi);
      const double root = polish(guess, lo, hi, dT, step);
      if (std::isfinite(root))
        roots.push_back(root);
    }
    return roots;
  };

  double step = opt.step;
  for (int r = 0;; ++r) {
    auto roots = solve(step);
    out.paths.clear();
    bool coarse = false;
    for (double s0 : roots) {
      try {
        out.paths.push_back(shooter.shoot(s0, step, true));
      } catch (const StepTooCoarse &) {
        coarse = true;
        break;
      } catch (const Blowup &) {
        // A root bracketed against an escaped shot; not a Dirichlet path.
      }
    }
    if (!coarse)
      break;
    if (r >= opt.max_refinements)
      throw StepTooCoarse(std::numeric_limits<double>::infinity(), opt.tol_ode);
    step *= 0.5;
  }
  out.no_solution = out.paths.empty();
  return out;
}

inline DirichletSearch find_dirichlet_paths(const ObstacleGrid &grid, int N,
                                            const PathOptions &opt = {},
                                            bool nonnegative_only = false) {
  Shooter shooter(grid, N, opt);
  return find_dirichlet_paths(shooter, default_slope_grid(shooter, nonnegative_only));
}

/// CSV with columns x,v,v_x over the dense samples.
inline void write_path_csv(std::ostream &os, const BlockedPath &p) {
  os << "x,v,v_x\n";
  char buf[96];
  for (const auto &s : p.samples) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", s.x, s.v, s.vx);
    os << buf;
  }
}

/// JSON summary: per-strip k(i), M(i), sojourn table, junction values.
inline nlohmann::json path_summary(const BlockedPath &p) {
  nlohmann::json j;
  j["N"] = p.N;
  j["delta"] = p.delta;
  j["F"] = p.F;
  j["F_hat"] = p.F_hat;
  j["seed"] = p.seed;
  j["slope0"] = p.slope0;
  j["terminal"] = p.terminal;
  j["junction_residual"] = p.junction_residual;
  j["ode_error"] = p.ode_error;
  j["validated"] = p.validated;
  auto &junctions = j["junctions"] = nlohmann::json::array();
  for (int i = -p.N; i <= p.N; ++i) {
    const Junction &q = p.at(i);
    junctions.push_back({{"i", i},
                         {"v_in", q.v_in},
                         {"vx_in", q.slope_in},
                         {"v_out", q.v_out},
                         {"vx_out", q.slope_out}});
  }
  auto &strips = j["strips"] = nlohmann::json::array();
  for (const auto &d : p.strips) {
    nlohmann::json s{{"i", d.column}, {"k", d.k}, {"M", d.M},
                     {"error_estimate", d.error_estimate}};
    auto &soj = s["sojourn"] = nlohmann::json::array();
    for (const auto &[row, S] : d.sojourn)
      soj.push_back({{"j", ObstacleGrid::row_center(row)}, {"S", S}});
    strips.push_back(std::move(s));
  }
  return j;
}

} // namespace romlab
