#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <limits>
#include <optional>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "romlab/errors.hpp"
#include "romlab/obstacle_field.hpp"

// Finite-difference integration of the driven interface equation
//
//   original:  u_t = u_xx + f(x, u) + F
//   auxiliary: v_t = v_xx + f~(x, v) + F chi(x)
//
// on a Dirichlet interval with a centered second difference in space.

namespace romlab {

enum class Problem { original, auxiliary };
enum class Scheme { explicit_euler, semi_implicit };

/// Nodal values on a uniform grid of [a, b] with Dirichlet end values.
struct GridFunction {
  double a = 0.0;
  double b = 1.0;
  std::vector<double> values; // n_cells + 1 nodes
  double left = 0.0;
  double right = 0.0;

  static GridFunction constant(double a, double b, std::size_t n_cells,
                               double value = 0.0) {
    GridFunction g{a, b, std::vector<double>(n_cells + 1, value), value,
                   value};
    return g;
  }

  /// Zero data on the stationary-problem interval [-N + delta, N - delta].
  static GridFunction dirichlet_zero(int N, double delta, std::size_t n_cells) {
    return constant(-N + delta, N - delta, n_cells, 0.0);
  }

  std::size_t n_cells() const noexcept { return values.size() - 1; }
  double h() const noexcept {
    return (b - a) / static_cast<double>(n_cells());
  }
  double x(std::size_t k) const noexcept {
    return k == n_cells() ? b : a + static_cast<double>(k) * h();
  }
  double max() const noexcept {
    return *std::max_element(values.begin(), values.end());
  }

  bool same_grid(const GridFunction &o) const noexcept {
    return a == o.a && b == o.b && values.size() == o.values.size();
  }

  void validate() const {
    if (values.size() < 3)
      throw ConfigError("init", "need at least two cells");
    if (!(b > a))
      throw ConfigError("init", "empty domain");
    if (values.front() != left || values.back() != right)
      throw ConfigError("init", "boundary nodes differ from Dirichlet data");
    for (double v : values)
      if (!std::isfinite(v))
        throw ConfigError("init", "non-finite initial value");
  }
};

struct Snapshot {
  double t;
  GridFunction u;
};

struct SolverStats {
  std::uint64_t steps = 0;
  double max_cfl = 0.0; // dt / h^2
};

struct Trajectory {
  std::vector<Snapshot> snapshots;
  SolverStats stats;

  const Snapshot &back() const { return snapshots.back(); }
};

struct SolverOptions {
  Scheme scheme = Scheme::explicit_euler;
  /// Time between stored snapshots; 0 keeps only the initial and final state.
  double snapshot_every = 0.0;
  /// Allows evolve() to switch to the semi-implicit scheme when dt violates
  /// the explicit stability limit instead of raising ConfigError.
  bool implicit_fallback = false;
};

/// Explicit-scheme limit on dt / h^2.
inline constexpr double explicit_stability_limit = 0.5;
/// Default dt = 0.4 h^2.
inline constexpr double default_dt_factor = 0.4;

namespace detail {

/// Pointwise nonlinearity with the x-dependent parts cached per node.
class Reaction {
public:
  Reaction(const ObstacleGrid &grid, Problem problem, const GridFunction &g)
      : grid_(grid), problem_(problem) {
    const std::size_t n = g.values.size();
    column_.resize(n);
    x_factor_.resize(n);
    constant_.resize(n);
    const double delta = grid.delta();
    for (std::size_t k = 0; k < n; ++k) {
      const double x = g.x(k);
      const auto i = ObstacleGrid::column_of(x);
      const double dx = x - static_cast<double>(i);
      column_[k] = i;
      x_factor_[k] = std::abs(dx) < delta ? grid.bump().factor(dx) : 0.0;
      constant_[k] = problem == Problem::original ? grid.F()
                                                  : grid.F() * grid.cutoff()(x);
    }
  }

  double operator()(std::size_t k, double u) const noexcept {
    double r = constant_[k];
    if (x_factor_[k] == 0.0)
      return r;
    const auto row = ObstacleGrid::row_of(u);
    const double ds = u - ObstacleGrid::row_center(row);
    if (std::abs(ds) >= grid_.delta())
      return r;
    const double shape = x_factor_[k] * grid_.bump().factor(ds);
    double weight = -grid_.strength(column_[k], row);
    if (problem_ == Problem::original && grid_.config().mean_zero)
      weight += 1.0 / grid_.config().lambda0;
    return r + weight * shape;
  }

private:
  const ObstacleGrid &grid_;
  Problem problem_;
  std::vector<std::int64_t> column_;
  std::vector<double> x_factor_;
  std::vector<double> constant_;
};

/// One time step; returns sup |u_new - u_old|.
class Stepper {
public:
  Stepper(const ObstacleGrid &grid, Problem problem, const GridFunction &init,
          double dt, Scheme scheme)
      : reaction_(grid, problem, init), dt_(dt), scheme_(scheme),
        next_(init.values.size()) {
    const double h = init.h();
    ratio_ = dt / (h * h);
    if (scheme_ == Scheme::semi_implicit) {
      // Factor (I - dt D2) once; Dirichlet rows are identity.
      const std::size_t n = init.values.size();
      c_prime_.assign(n, 0.0);
      denom_.assign(n, 1.0);
      for (std::size_t k = 1; k + 1 < n; ++k) {
        const double diag = 1.0 + 2.0 * ratio_;
        const double lower = k > 1 ? -ratio_ : 0.0;
        denom_[k] = diag - lower * c_prime_[k - 1];
        c_prime_[k] = (k + 2 < n ? -ratio_ : 0.0) / denom_[k];
      }
    }
  }

  double ratio() const noexcept { return ratio_; }

  double step(std::vector<double> &u) {
    const std::size_t n = u.size();
    next_[0] = u[0];
    next_[n - 1] = u[n - 1];
    if (scheme_ == Scheme::explicit_euler) {
      for (std::size_t k = 1; k + 1 < n; ++k)
        next_[k] = u[k] + ratio_ * (u[k - 1] - 2.0 * u[k] + u[k + 1]) +
                   dt_ * reaction_(k, u[k]);
    } else {
      // Thomas sweep on (I - dt D2) next = u + dt N(u), boundary terms moved
      // to the right-hand side.
      for (std::size_t k = 1; k + 1 < n; ++k) {
        double rhs = u[k] + dt_ * reaction_(k, u[k]);
        if (k == 1)
          rhs += ratio_ * u[0];
        if (k + 2 == n)
          rhs += ratio_ * u[n - 1];
        const double lower = k > 1 ? -ratio_ : 0.0;
        const double prev = k > 1 ? next_[k - 1] : 0.0;
        next_[k] = (rhs - lower * prev) / denom_[k];
      }
      for (std::size_t k = n - 2; k >= 2; --k)
        next_[k - 1] -= c_prime_[k - 1] * next_[k];
    }
    double increment = 0.0;
    for (std::size_t k = 1; k + 1 < n; ++k) {
      if (!std::isfinite(next_[k]))
        throw StabilityViolation("non-finite value at node " +
                                 std::to_string(k));
      increment = std::max(increment, std::abs(next_[k] - u[k]));
    }
    u.swap(next_);
    return increment;
  }

private:
  Reaction reaction_;
  double dt_;
  Scheme scheme_;
  double ratio_ = 0.0;
  std::vector<double> next_;
  std::vector<double> c_prime_;
  std::vector<double> denom_;
};

inline Scheme resolve_scheme(const GridFunction &init, double dt,
                             const SolverOptions &opt) {
  if (!(dt > 0.0) || !std::isfinite(dt))
    throw ConfigError("dt", "must be positive");
  const double ratio = dt / (init.h() * init.h());
  if (opt.scheme == Scheme::explicit_euler &&
      ratio > explicit_stability_limit) {
    if (!opt.implicit_fallback)
      throw ConfigError("dt", "dt / h^2 = " + std::to_string(ratio) +
                                  " exceeds the explicit limit 0.5");
    return Scheme::semi_implicit;
  }
  return opt.scheme;
}

} // namespace detail

/// Integrates from `init` to `t_end` with fixed step dt (the last step is
/// shortened to land on t_end). Boundary values are held fixed.
inline Trajectory evolve(const ObstacleGrid &grid, Problem problem,
                         const GridFunction &init, double t_end, double dt,
                         const SolverOptions &opt = {}) {
  init.validate();
  if (!(t_end >= 0.0))
    throw ConfigError("t_end", "must be nonnegative");
  const Scheme scheme = detail::resolve_scheme(init, dt, opt);

  Trajectory traj;
  traj.snapshots.push_back({0.0, init});
  GridFunction u = init;
  detail::Stepper stepper(grid, problem, init, dt, scheme);
  traj.stats.max_cfl = stepper.ratio();

  const auto total =
      static_cast<std::uint64_t>(std::ceil(t_end / dt - 1e-9));
  std::optional<detail::Stepper> last_stepper;
  double next_snap = opt.snapshot_every > 0.0 ? opt.snapshot_every
                                              : std::numeric_limits<double>::infinity();
  for (std::uint64_t n = 0; n < total; ++n) {
    const double t0 = static_cast<double>(n) * dt;
    double t1 = static_cast<double>(n + 1) * dt;
    if (n + 1 == total && t1 > t_end) {
      // Final partial step.
      last_stepper.emplace(grid, problem, init, t_end - t0, scheme);
      last_stepper->step(u.values);
      t1 = t_end;
    } else {
      stepper.step(u.values);
    }
    ++traj.stats.steps;
    if (n + 1 == total) {
      traj.snapshots.push_back({t1, u});
    } else if (t1 >= next_snap - 1e-12 * dt) {
      traj.snapshots.push_back({t1, u});
      next_snap += opt.snapshot_every;
    }
  }
  return traj;
}

/// evolve() with strengths truncated at M.
inline Trajectory truncated_evolve(const ObstacleGrid &grid,
                                   std::optional<double> M, Problem problem,
                                   const GridFunction &init, double t_end,
                                   double dt, const SolverOptions &opt = {}) {
  return evolve(grid.with_cap(M), problem, init, t_end, dt, opt);
}

enum class StationaryStatus { stationary, not_stationary, height_exceeded };

struct StationaryResult {
  StationaryStatus status = StationaryStatus::not_stationary;
  double t = 0.0;
  GridFunction u;
  std::uint64_t steps = 0;
  /// Last sup-norm increment per unit time.
  double rate = 0.0;

  bool stationary() const noexcept {
    return status == StationaryStatus::stationary;
  }
};

struct StationaryOptions {
  double tol = 1e-8;   // on sup |u_t|
  double t_max = 0.0;  // 0 selects the diffusive horizon 50 N^2
  /// Stop early once max u exceeds this height.
  std::optional<double> height_limit;
  Scheme scheme = Scheme::explicit_euler;
};

/// Evolves until the sup-norm increment per unit time drops below tol.
/// Returns the first such state, or the state at t_max tagged
/// not_stationary (or height_exceeded when a height limit triggered).
inline StationaryResult stationary_limit(const ObstacleGrid &grid,
                                         Problem problem,
                                         const GridFunction &init, double dt,
                                         const StationaryOptions &opt) {
  init.validate();
  if (!(opt.tol > 0.0))
    throw ConfigError("tol", "must be positive");
  double t_max = opt.t_max;
  if (t_max <= 0.0) {
    const double half = 0.5 * (init.b - init.a) + grid.delta();
    t_max = 50.0 * half * half;
  }
  SolverOptions so;
  so.scheme = opt.scheme;
  const Scheme scheme = detail::resolve_scheme(init, dt, so);
  detail::Stepper stepper(grid, problem, init, dt, scheme);

  StationaryResult res;
  res.u = init;
  const auto max_steps = static_cast<std::uint64_t>(std::ceil(t_max / dt));
  for (std::uint64_t n = 0; n < max_steps; ++n) {
    const double inc = stepper.step(res.u.values);
    ++res.steps;
    res.t = static_cast<double>(n + 1) * dt;
    res.rate = inc / dt;
    if (opt.height_limit && res.u.max() > *opt.height_limit) {
      res.status = StationaryStatus::height_exceeded;
      return res;
    }
    if (res.rate < opt.tol) {
      res.status = StationaryStatus::stationary;
      return res;
    }
  }
  res.status = StationaryStatus::not_stationary;
  return res;
}

struct ComparisonReport {
  bool pass = true;
  /// max over nodes/times of (low - high); <= tol on success.
  double worst = -std::numeric_limits<double>::infinity();
  double worst_t = 0.0;
  double worst_x = 0.0;
};

/// Checks low <= high + tol at every node of every shared snapshot.
inline ComparisonReport comparison_check(const Trajectory &low,
                                         const Trajectory &high, double tol) {
  if (low.snapshots.size() != high.snapshots.size())
    throw GridMismatch("trajectories have different snapshot counts");
  ComparisonReport rep;
  for (std::size_t s = 0; s < low.snapshots.size(); ++s) {
    const auto &a = low.snapshots[s];
    const auto &b = high.snapshots[s];
    if (a.t != b.t || !a.u.same_grid(b.u))
      throw GridMismatch("snapshot " + std::to_string(s) + " differs in grid or time");
    for (std::size_t k = 0; k < a.u.values.size(); ++k) {
      const double d = a.u.values[k] - b.u.values[k];
      if (d > rep.worst) {
        rep.worst = d;
        rep.worst_t = a.t;
        rep.worst_x = a.u.x(k);
      }
    }
  }
  rep.pass = rep.worst <= tol;
  return rep;
}

/// CSV with columns t,x,u, one row per node per snapshot.
inline void write_trajectory_csv(std::ostream &os, const Trajectory &traj) {
  os << "t,x,u\n";
  char buf[96];
  for (const auto &snap : traj.snapshots)
    for (std::size_t k = 0; k < snap.u.values.size(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", snap.t,
                    snap.u.x(k), snap.u.values[k]);
      os << buf;
    }
}

// Binary trajectory layout (all little-endian):
//   char[8]  magic "ROMTRAJ1"
//   u64      snapshot count S
//   u64      node count n
//   f64      a, b
//   S rows of (1 + n) f64: t, u_0 .. u_{n-1}
inline constexpr char trajectory_magic[8] = {'R', 'O', 'M', 'T',
                                             'R', 'A', 'J', '1'};

namespace detail {
template <class T> void put_le(std::ostream &os, T value) {
  static_assert(sizeof(T) == 8);
  std::uint64_t bits;
  std::memcpy(&bits, &value, 8);
  unsigned char bytes[8];
  for (int k = 0; k < 8; ++k)
    bytes[k] = static_cast<unsigned char>(bits >> (8 * k));
  os.write(reinterpret_cast<const char *>(bytes), 8);
}
template <class T> T get_le(std::istream &is) {
  unsigned char bytes[8];
  if (!is.read(reinterpret_cast<char *>(bytes), 8))
    throw Error("truncated trajectory file");
  std::uint64_t bits = 0;
  for (int k = 0; k < 8; ++k)
    bits |= static_cast<std::uint64_t>(bytes[k]) << (8 * k);
  T value;
  std::memcpy(&value, &bits, 8);
  return value;
}
} // namespace detail

inline void write_trajectory_binary(std::ostream &os, const Trajectory &traj) {
  if (traj.snapshots.empty())
    throw Error("empty trajectory");
  const auto &g = traj.snapshots.front().u;
  os.write(trajectory_magic, 8);
  detail::put_le<std::uint64_t>(os, traj.snapshots.size());
  detail::put_le<std::uint64_t>(os, g.values.size());
  detail::put_le<double>(os, g.a);
  detail::put_le<double>(os, g.b);
  for (const auto &snap : traj.snapshots) {
    detail::put_le<double>(os, snap.t);
    for (double v : snap.u.values)
      detail::put_le<double>(os, v);
  }
}

inline Trajectory read_trajectory_binary(std::istream &is) {
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, trajectory_magic, 8) != 0)
    throw Error("not a trajectory file");
  const auto count = detail::get_le<std::uint64_t>(is);
  const auto nodes = detail::get_le<std::uint64_t>(is);
  const double a = detail::get_le<double>(is);
  const double b = detail::get_le<double>(is);
  Trajectory traj;
  for (std::uint64_t s = 0; s < count; ++s) {
    Snapshot snap;
    snap.t = detail::get_le<double>(is);
    snap.u.a = a;
    snap.u.b = b;
    snap.u.values.resize(nodes);
    for (auto &v : snap.u.values)
      v = detail::get_le<double>(is);
    snap.u.left = snap.u.values.front();
    snap.u.right = snap.u.values.back();
    traj.snapshots.push_back(std::move(snap));
  }
  return traj;
}

} // namespace romlab
