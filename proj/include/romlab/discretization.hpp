#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <ostream>
#include <vector>

#include <nlohmann/json.hpp>

#include "romlab/blocked_path.hpp"
#include "romlab/errors.hpp"
#include "romlab/obstacle_field.hpp"

// Discretization of blocked paths onto the grid delta Z, discrete calculus
// and pointwise checks of the a-priori bounds.
//
//   v_hat(i)  = v(i - delta) + 2 delta v_x(i - delta)
//   v_bar[i]  = inf { j in delta Z : j >= v_hat(i) - delta / 2 }
//
// v_bar is stored as the integer n[i] with v_bar[i] = delta * n[i].

namespace romlab {

struct DiscretePath {
  int N = 0;
  double delta = 0.0;
  std::vector<double> v_hat;        // index i + N, i in [-N, N]
  std::vector<std::int64_t> units;  // v_bar[i] / delta

  double hat(int i) const { return v_hat.at(static_cast<std::size_t>(i + N)); }
  std::int64_t unit(int i) const {
    return units.at(static_cast<std::size_t>(i + N));
  }
  double bar(int i) const { return delta * static_cast<double>(unit(i)); }
  /// Terminal value b = v_bar[N].
  double terminal() const { return bar(N); }
};

/// ceil(q) with q snapped to the nearest integer when it is within rounding
/// noise of it, so that exact grid points resolve to the closed inf.
inline std::int64_t grid_index(double v_hat, double delta) {
  const double q = v_hat / delta - 0.5;
  const double r = std::nearbyint(q);
  if (std::abs(q - r) <= 1e-9 * std::max(1.0, std::abs(q)))
    return static_cast<std::int64_t>(r);
  return static_cast<std::int64_t>(std::ceil(q));
}

inline DiscretePath discretize(const BlockedPath &p) {
  if (p.junctions.size() != static_cast<std::size_t>(2 * p.N + 1))
    throw DomainError("path lacks junction data");
  DiscretePath d;
  d.N = p.N;
  d.delta = p.delta;
  d.v_hat.reserve(p.junctions.size());
  d.units.reserve(p.junctions.size());
  for (int i = -p.N; i <= p.N; ++i) {
    const Junction &j = p.at(i);
    const double h = j.v_in + 2.0 * p.delta * j.slope_in;
    d.v_hat.push_back(h);
    d.units.push_back(grid_index(h, p.delta));
  }
  return d;
}

/// Discrete derivatives of z[0 .. n-1], stored at full length:
///   laplacian[m] = z[m+1] - 2 z[m] + z[m-1]   for 1 <= m <= n-2
///   left[m]      = z[m] - z[m-1]              for 1 <= m <= n-1
///   right[m]     = z[m] - z[m+1]              for 0 <= m <= n-2
/// Entries outside those ranges are zero.
template <class T> struct DiscreteDerivatives {
  std::vector<T> laplacian;
  std::vector<T> left;
  std::vector<T> right;
};

template <class T>
DiscreteDerivatives<T> discrete_calculus(const std::vector<T> &z) {
  const std::size_t n = z.size();
  if (n < 3)
    throw LengthError("discrete calculus needs at least three values");
  DiscreteDerivatives<T> d{std::vector<T>(n, T{}), std::vector<T>(n, T{}),
                           std::vector<T>(n, T{})};
  for (std::size_t m = 1; m + 1 < n; ++m)
    d.laplacian[m] = z[m + 1] - 2 * z[m] + z[m - 1];
  for (std::size_t m = 1; m < n; ++m)
    d.left[m] = z[m] - z[m - 1];
  for (std::size_t m = 0; m + 1 < n; ++m)
    d.right[m] = z[m] - z[m + 1];
  return d;
}

struct IdentityCheck {
  bool i = true;
  bool ii = true;
  bool iii = true;
  bool iv = true;
  bool v = true;
  bool all() const noexcept { return i && ii && iii && iv && v; }
};

/// Checks the summation identities relating z, its one-sided differences and
/// its discrete Laplacian, for every admissible pair of indices. Exact for
/// integer T.
template <class T> IdentityCheck check_discrete_identities(const std::vector<T> &z) {
  const auto d = discrete_calculus(z);
  const auto &L = d.laplacian;
  const auto &nl = d.left;
  const auto &nr = d.right;
  const long n = static_cast<long>(z.size());
  auto lap_sum = [&](long from, long to) {
    T s{};
    for (long m = from; m <= to; ++m)
      s += L[m];
    return s;
  };
  IdentityCheck c;
  // (i) forward differences accumulate the Laplacian.
  for (long l = 1; l + 1 < n; ++l) {
    if (nl[l + 1] != L[l] + nl[l])
      c.i = false;
    for (long k = 1; k <= l; ++k)
      if (nl[l + 1] != lap_sum(k, l) + nl[k])
        c.i = false;
  }
  // (ii) values from a double sum of Laplacians.
  for (long l = 0; l + 1 < n; ++l)
    for (long k = 0; k <= l; ++k) {
      T s{};
      for (long i = k + 1; i <= l; ++i)
        s += lap_sum(k + 1, i);
      if (z[l + 1] - z[k] != s + static_cast<T>(l + 1 - k) * nl[k + 1])
        c.ii = false;
      T t{};
      for (long i = k + 1; i <= l + 1; ++i)
        t += z[i] - z[i - 1];
      if (z[l + 1] - z[k] != t)
        c.ii = false;
    }
  // (iii) backward differences accumulate the Laplacian.
  for (long l = 1; l + 1 < n; ++l)
    for (long k = 0; k < l; ++k) {
      if (nr[k] != L[k + 1] + nr[k + 1])
        c.iii = false;
      if (nr[k] != lap_sum(k + 1, l) + nr[l])
        c.iii = false;
    }
  // (iv) values from the mirrored double sum.
  for (long l = 0; l + 1 < n; ++l)
    for (long k = 0; k <= l; ++k) {
      T s{};
      for (long i = k; i <= l - 1; ++i)
        s += lap_sum(i + 1, l);
      if (z[k] - z[l + 1] != s + static_cast<T>(l + 1 - k) * nr[l])
        c.iv = false;
      T t{};
      for (long i = k; i <= l; ++i)
        t += z[i] - z[i + 1];
      if (z[k] - z[l + 1] != t)
        c.iv = false;
    }
  // (v)
  for (long l = 0; l + 1 < n; ++l)
    if (nl[l + 1] != -nr[l])
      c.v = false;
  return c;
}

struct AveragingCheck {
  std::int64_t double_sum = 0;   // sum_{i=1}^N sum_{j=i}^N a_j
  std::int64_t weighted_sum = 0; // sum_j j a_j
  std::int64_t bound = 0;        // N sum_j a_j
  bool holds() const noexcept {
    return double_sum == weighted_sum && weighted_sum <= bound;
  }
};

/// a[0] holds a_1, ..., a[N-1] holds a_N; entries must be nonnegative.
inline AveragingCheck check_averaging_identity(const std::vector<std::int64_t> &a) {
  const auto N = static_cast<std::int64_t>(a.size());
  AveragingCheck c;
  std::int64_t total = 0;
  for (std::int64_t i = 1; i <= N; ++i)
    for (std::int64_t j = i; j <= N; ++j)
      c.double_sum += a[j - 1];
  for (std::int64_t j = 1; j <= N; ++j) {
    if (a[j - 1] < 0)
      throw DomainError("averaging identity needs nonnegative entries");
    c.weighted_sum += j * a[j - 1];
    total += a[j - 1];
  }
  c.bound = N * total;
  return c;
}

// ---------------------------------------------------------------------------
// A-priori bounds

struct LemmaRow {
  int i = 0;
  double lap_hat_plus_F_hat = 0.0; // Delta_d v_hat(i) + F_hat
  double lap_bar_plus_F_bar = 0.0; // Delta_d v_bar(i) + F_bar
  double k = 0.0;
  double M = 0.0;
  double window_sum = 0.0;   // sum l(i, j), |j - v_hat(i)| <= 4 delta M
  double window_sum_c = 0.0; // sum l(i, j), |j - v_bar(i)| <= delta (4 M' + 1/2)
  double slack_a_lo = 0.0;
  double slack_a_hi = 0.0;
  double slack_b = std::numeric_limits<double>::quiet_NaN(); // only if k > 0
  bool b_applies = false;    // k >= 1
  double slack_c_lo = 0.0;
  double slack_c_hi = 0.0;
  /// Informational: lower bound with the rounding and F_bar offsets,
  /// -2 delta A(i-1) - (1 + 4 delta).
  double slack_c_lo_offset = 0.0;
  /// Informational: both sides with 180 delta^2 in place of 360 delta^2.
  double slack_c_lo_180 = 0.0;
  double slack_c_hi_180 = 0.0;
};

struct LemmaReport {
  int N = 0;
  double delta = 0.0;
  double F_hat = 0.0;
  double F_bar = 0.0;
  double tolerance = 0.0;
  std::vector<LemmaRow> rows;
  int violations_a = 0;
  int violations_b = 0;
  int violations_c_lo = 0;
  int violations_c_hi = 0;
  int violations_c_lo_offset = 0;
  double min_slack_a = std::numeric_limits<double>::infinity();
  double min_slack_b = std::numeric_limits<double>::infinity();
  double min_slack_c_lo = std::numeric_limits<double>::infinity();
  double min_slack_c_hi = std::numeric_limits<double>::infinity();

  bool pass_a() const noexcept { return violations_a == 0; }
  bool pass_b() const noexcept { return violations_b == 0; }
  bool pass_c() const noexcept {
    return violations_c_lo == 0 && violations_c_hi == 0;
  }
  bool pass() const noexcept { return pass_a() && pass_b() && pass_c(); }
};

/// Default slack tolerance: 1e-6 + 10 tol_ode.
inline double lemma_tolerance(double tol_ode) { return 1e-6 + 10.0 * tol_ode; }

/// Checks, at every interior index,
///   (a) -2 delta k(i-1) <= Delta_d v_hat(i) + F_hat <= (1 + 2 delta) k(i)
///   (b) k(i) <= 18 delta / M sum_{|j - v_hat(i)| <= 4 delta M} l(i, j)
///       (gated when k(i) >= 1, recorded when k(i) > 0)
///   (c) -2 delta A(i-1) <= Delta_d v_bar(i) + F_bar <= (1 + 2 delta) A(i)
///       with A(i) = 360 delta^2 / (2 w) sum_{|j - v_bar(i)| <= w} l(i, j),
///       w = delta (4 M'(i) + 1/2), M'(i) = max(M(i), 1/2).
/// Columns +-N carry no obstacles (Dirichlet extension).
inline LemmaReport verify_lemma_bounds(const BlockedPath &path,
                                       const DiscretePath &dpath,
                                       const ObstacleGrid &grid,
                                       double tolerance = lemma_tolerance(1e-8)) {
  const int N = path.N;
  const double delta = path.delta;
  const ObstacleGrid field = grid.with_dirichlet_extension(N);
  LemmaReport rep;
  rep.N = N;
  rep.delta = delta;
  rep.F_hat = path.F_hat;
  rep.F_bar = path.F_hat - (1.0 + 2.0 * delta);
  rep.tolerance = tolerance;

  auto k_of = [&](int i) {
    const Junction &j = path.at(i);
    return j.slope_out - j.slope_in;
  };
  auto M_of = [&](int i) {
    const Junction &j = path.at(i);
    return std::max(std::abs(j.slope_in), std::abs(j.slope_out));
  };
  auto A_of = [&](int i, double factor) {
    const double Mp = std::max(M_of(i), 0.5);
    const double w = delta * (4.0 * Mp + 0.5);
    return factor * delta * delta / (2.0 * w) *
           field.window_sum(i, dpath.bar(i), w);
  };

  for (int i = -N + 1; i <= N - 1; ++i) {
    LemmaRow r;
    r.i = i;
    r.k = k_of(i);
    r.M = M_of(i);
    const double lap_hat = dpath.hat(i + 1) - 2.0 * dpath.hat(i) + dpath.hat(i - 1);
    const double lap_bar =
        delta * static_cast<double>(dpath.unit(i + 1) - 2 * dpath.unit(i) +
                                    dpath.unit(i - 1));
    r.lap_hat_plus_F_hat = lap_hat + rep.F_hat;
    r.lap_bar_plus_F_bar = lap_bar + rep.F_bar;

    r.slack_a_lo = r.lap_hat_plus_F_hat + 2.0 * delta * k_of(i - 1);
    r.slack_a_hi = (1.0 + 2.0 * delta) * r.k - r.lap_hat_plus_F_hat;

    if (r.k > 0.0 && r.M > 0.0) {
      r.window_sum = field.window_sum(i, dpath.hat(i), 4.0 * delta * r.M);
      r.slack_b = 18.0 * delta / r.M * r.window_sum - r.k;
      r.b_applies = r.k >= 1.0;
      if (r.b_applies && r.M < 0.5)
        r.slack_b = std::min(r.slack_b, r.M - 0.5);
    }

    const double Mp = std::max(r.M, 0.5);
    r.window_sum_c = field.window_sum(i, dpath.bar(i), delta * (4.0 * Mp + 0.5));
    const double A_i = A_of(i, 360.0), A_prev = A_of(i - 1, 360.0);
    r.slack_c_hi = (1.0 + 2.0 * delta) * A_i - r.lap_bar_plus_F_bar;
    r.slack_c_lo = r.lap_bar_plus_F_bar + 2.0 * delta * A_prev;
    r.slack_c_lo_offset = r.slack_c_lo + (1.0 + 4.0 * delta);
    const double B_i = A_of(i, 180.0), B_prev = A_of(i - 1, 180.0);
    r.slack_c_hi_180 = (1.0 + 2.0 * delta) * B_i - r.lap_bar_plus_F_bar;
    r.slack_c_lo_180 = r.lap_bar_plus_F_bar + 2.0 * delta * B_prev;

    const double fail = -tolerance;
    if (r.slack_a_lo < fail || r.slack_a_hi < fail)
      ++rep.violations_a;
    if (r.b_applies && r.slack_b < fail)
      ++rep.violations_b;
    if (r.slack_c_lo < fail)
      ++rep.violations_c_lo;
    if (r.slack_c_hi < fail)
      ++rep.violations_c_hi;
    if (r.slack_c_lo_offset < fail)
      ++rep.violations_c_lo_offset;
    rep.min_slack_a = std::min({rep.min_slack_a, r.slack_a_lo, r.slack_a_hi});
    if (r.b_applies)
      rep.min_slack_b = std::min(rep.min_slack_b, r.slack_b);
    rep.min_slack_c_lo = std::min(rep.min_slack_c_lo, r.slack_c_lo);
    rep.min_slack_c_hi = std::min(rep.min_slack_c_hi, r.slack_c_hi);
    rep.rows.push_back(r);
  }
  return rep;
}

struct InterpolationReport {
  std::size_t samples_checked = 0;
  double min_slack_w = std::numeric_limits<double>::infinity();     // v - w
  double min_slack_w_bar = std::numeric_limits<double>::infinity(); // v + delta/2 - w_bar
  double tolerance = 1e-6;
  bool pass() const noexcept {
    return min_slack_w >= -tolerance && min_slack_w_bar >= -tolerance;
  }
};

/// Piecewise linear interpolants w of v_hat and w_bar of v_bar with node i
/// placed at x = i + delta, where v_hat(i) is attained as a tangent value;
/// checks v >= w and v + delta / 2 >= w_bar at every dense sample of
/// [-N + delta, N + delta].
inline InterpolationReport verify_interpolation_bound(const BlockedPath &path,
                                                      const DiscretePath &dpath,
                                                      double tolerance = 1e-6) {
  InterpolationReport rep;
  rep.tolerance = tolerance;
  const int N = path.N;
  const double delta = path.delta;
  for (const auto &s : path.samples) {
    const double u = s.x - delta; // node coordinate
    if (u < -N - 1e-12 || u > N + 1e-12)
      continue;
    int i0 = static_cast<int>(std::floor(u));
    i0 = std::clamp(i0, -N, N - 1);
    const double t = std::clamp(u - i0, 0.0, 1.0);
    const double w = (1.0 - t) * dpath.hat(i0) + t * dpath.hat(i0 + 1);
    const double wb = (1.0 - t) * dpath.bar(i0) + t * dpath.bar(i0 + 1);
    rep.min_slack_w = std::min(rep.min_slack_w, s.v - w);
    rep.min_slack_w_bar = std::min(rep.min_slack_w_bar, s.v + 0.5 * delta - wb);
    ++rep.samples_checked;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Triangle crossing

enum class TriangleHeight {
  K_N_minus_1, // z_K[i] = K (N - 1) - K |i|
  K_N,         // z_K[i] = K N - K |i|
};

inline double triangle(int N, double K, int i,
                       TriangleHeight h = TriangleHeight::K_N_minus_1) {
  const double top = h == TriangleHeight::K_N_minus_1 ? K * (N - 1) : K * N;
  return top - K * std::abs(i);
}

struct CrossingResult {
  /// The literal relation: some i in [-N, N-1] with v[i] >= z[i] and
  /// v[i+1] <= z[i+1].
  bool crosses = false;
  int first_index = 0;
  std::vector<int> indices;
  /// A crossing at an index where the triangle is strictly positive.
  bool crosses_above = false;
  /// Some i with z[i] > 0 and v[i] < z[i].
  bool below_triangle = false;
  bool below_at_zero = false;
};

inline CrossingResult crossing_check(const DiscretePath &d, double K,
                                     TriangleHeight h = TriangleHeight::K_N_minus_1) {
  if (!(K > 0.0))
    throw DomainError("K must be positive");
  CrossingResult r;
  const int N = d.N;
  for (int i = -N; i <= N - 1; ++i) {
    const double zi = triangle(N, K, i, h);
    const double zn = triangle(N, K, i + 1, h);
    if (d.bar(i) >= zi && d.bar(i + 1) <= zn) {
      if (!r.crosses)
        r.first_index = i;
      r.crosses = true;
      r.indices.push_back(i);
      if (zi > 0.0)
        r.crosses_above = true;
    }
  }
  for (int i = -N; i <= N; ++i) {
    const double zi = triangle(N, K, i, h);
    if (zi > 0.0 && d.bar(i) < zi)
      r.below_triangle = true;
  }
  r.below_at_zero = d.bar(0) < triangle(N, K, 0, h);
  return r;
}

// ---------------------------------------------------------------------------
// Export

inline nlohmann::json to_json(const LemmaReport &r) {
  auto finite = [](double x) {
    return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr);
  };
  return {{"N", r.N},
          {"delta", r.delta},
          {"F_hat", r.F_hat},
          {"F_bar", r.F_bar},
          {"tolerance", r.tolerance},
          {"interior_points", r.rows.size()},
          {"violations",
           {{"a", r.violations_a},
            {"b", r.violations_b},
            {"c_lo", r.violations_c_lo},
            {"c_hi", r.violations_c_hi},
            {"c_lo_offset", r.violations_c_lo_offset}}},
          {"min_slack",
           {{"a", finite(r.min_slack_a)},
            {"b", finite(r.min_slack_b)},
            {"c_lo", finite(r.min_slack_c_lo)},
            {"c_hi", finite(r.min_slack_c_hi)}}},
          {"pass", r.pass()}};
}

inline const char *lemma_csv_header() {
  return "i,lap_hat_plus_F_hat,k,M,window_sum,slack_a_lo,slack_a_hi,slack_b,"
         "slack_c_lo,slack_c_hi";
}

inline void write_lemma_row(std::ostream &os, const LemmaRow &r) {
  char b[40] = "";
  if (std::isfinite(r.slack_b))
    std::snprintf(b, sizeof b, "%.17g", r.slack_b);
  char buf[360];
  std::snprintf(buf, sizeof buf,
                "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%s,%.17g,%.17g\n", r.i,
                r.lap_hat_plus_F_hat, r.k, r.M, r.window_sum, r.slack_a_lo,
                r.slack_a_hi, b, r.slack_c_lo, r.slack_c_hi);
  os << buf;
}

inline void write_lemma_csv(std::ostream &os, const LemmaReport &r) {
  os << lemma_csv_header() << '\n';
  for (const auto &row : r.rows)
    write_lemma_row(os, row);
}

} // namespace romlab
