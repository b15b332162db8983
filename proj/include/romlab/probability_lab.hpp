#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "romlab/discretization.hpp"
#include "romlab/ensemble.hpp"
#include "romlab/errors.hpp"

// Exponential moments of obstacle sums, the product measure on discrete
// Laplacians, the rate function and crossing-probability estimation.

namespace romlab {

class InsufficientSamples : public Error {
public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Laplace transforms of exponential sums

/// E exp(lambda sum_{i<=L} X_i) = (lambda0 / (lambda0 - lambda))^L for
/// i.i.d. Exp(lambda0) variables.
inline double laplace_moment(double lambda0, double lambda, int L = 1) {
  if (!(lambda0 > 0.0))
    throw DomainError("lambda0 must be positive");
  if (!(lambda < lambda0))
    throw DomainError("lambda must be below lambda0");
  if (L < 1)
    throw DomainError("L must be at least 1");
  return std::pow(lambda0 / (lambda0 - lambda), L);
}

/// log E exp(lambda / L sum_{i<=L} X_i).
inline double log_normalized_moment(double lambda0, double lambda, int L) {
  if (!(lambda < lambda0 * L))
    throw DomainError("lambda / L must be below lambda0");
  return -L * std::log1p(-lambda / (lambda0 * L));
}

/// The normalized-sum bound in the form exp(lambda 4 ln(4/3) lambda / (3 lambda0)),
/// stated for L >= 2 and lambda in (2 lambda0 / 3, lambda0).
inline double normalized_sum_bound_stated(double lambda0, double lambda) {
  return std::exp(lambda * 4.0 * std::log(4.0 / 3.0) * lambda / (3.0 * lambda0));
}

/// Chord bound ln(1 - x) >= (4/3) x ln(1/4) on [0, 3/4] applied with
/// x = lambda / (lambda0 L) <= 1/2:
///   E exp(lambda / L sum X_i) <= exp((4/3) ln 4 lambda / lambda0), L >= 2.
inline double normalized_sum_bound(double lambda0, double lambda) {
  return std::exp(4.0 / 3.0 * std::log(4.0) * lambda / lambda0);
}

/// ln(1 - x) >= (4/3) x ln(3/4): the chord inequality in the stated form.
inline bool stated_chord_inequality(double x) {
  return std::log1p(-x) >= 4.0 / 3.0 * x * std::log(0.75);
}

/// ln(1 - x) >= (4/3) x ln(1/4): the chord of ln(1 - x) over [0, 3/4].
inline bool chord_inequality(double x) {
  return std::log1p(-x) >= 4.0 / 3.0 * x * std::log(0.25) - 1e-15;
}

/// Tail constants for normalized window sums S_L / L of Exp(lambda0)
/// strengths: P(S_L / L > r) <= exp(C - lambda_hat r) for all L >= 1, from
/// exponential Chebyshev with lambda_hat = 5 lambda0 / 6.
struct WindowTail {
  double lambda_hat;
  double C;
};

inline WindowTail window_tail(double lambda0) {
  const double lh = 5.0 * lambda0 / 6.0;
  const double single = std::log(lambda0 / (lambda0 - lh));
  const double multi = 4.0 / 3.0 * std::log(4.0) * lh / lambda0;
  return {lh, std::max(single, multi)};
}

// ---------------------------------------------------------------------------
// Constants and the auxiliary measure

struct RateParams {
  double lambda0 = 1.0;
  double delta = 0.1;
  /// Overrides; unset values take the defaults below.
  std::optional<double> C0, lambda1, C_hat, C_tilde;

  double mu() const noexcept { return 1.0 / lambda0; }
  /// 1 / ((1 + 2 delta) 360 delta^2): converts Delta_d v_bar + F_bar into the
  /// normalized window sum that bounds it.
  double c0() const noexcept {
    return C0 ? *C0 : 1.0 / ((1.0 + 2.0 * delta) * 360.0 * delta * delta);
  }
  /// Each window enters two neighbouring sites, hence the factor 1/2.
  double l1() const noexcept {
    return lambda1 ? *lambda1 : 0.5 * window_tail(lambda0).lambda_hat * c0();
  }
  double c_hat() const noexcept {
    return C_hat ? *C_hat : 2.0 * window_tail(lambda0).C;
  }
  double c_tilde(double Z) const noexcept {
    return C_tilde ? *C_tilde : 2.0 * c_hat() + 2.0 * std::log(Z);
  }
};

struct PartitionValue {
  double Z;
  double tail_bound; // bound on the omitted terms
  long terms;
};

/// Z = sum_k exp(-lambda1 |delta k + F_bar|), summed outward from the mode
/// until the geometric tail falls below rel_tol Z.
inline PartitionValue partition_Z(double lambda1, double delta, double F_bar,
                                  double rel_tol = 1e-13) {
  if (!(lambda1 > 0.0) || !(delta > 0.0))
    throw DomainError("lambda1 and delta must be positive");
  const double q = std::exp(-lambda1 * delta);
  const auto k0 = static_cast<long>(std::nearbyint(-F_bar / delta));
  double Z = std::exp(-lambda1 * std::abs(delta * k0 + F_bar));
  long terms = 1;
  double tail = 0.0;
  for (long m = 1;; ++m) {
    const double up = std::exp(-lambda1 * std::abs(delta * (k0 + m) + F_bar));
    const double down = std::exp(-lambda1 * std::abs(delta * (k0 - m) + F_bar));
    Z += up + down;
    terms += 2;
    // Beyond the mode every further term shrinks by q.
    tail = (up + down) * q / (1.0 - q);
    if (tail < rel_tol * Z)
      break;
  }
  // The remainder is geometric past the mode, so adding it leaves only roundoff.
  Z += tail;
  return {Z, tail, terms};
}

struct AuxMeasure {
  double lambda1;
  double F_bar;
  double delta;
  int N;
  PartitionValue partition;

  AuxMeasure(double lambda1_, double F_bar_, double delta_, int N_)
      : lambda1(lambda1_), F_bar(F_bar_), delta(delta_), N(N_),
        partition(partition_Z(lambda1_, delta_, F_bar_)) {
    if (N < 1)
      throw DomainError("N must be at least 1");
  }
  double Z() const noexcept { return partition.Z; }
  double log_Z() const noexcept { return std::log(partition.Z); }
};

/// log of exp(-lambda1 sum |L_i + F_bar|) / Z^{2N-1} for Laplacian values
/// L_i (in absolute units).
inline double aux_log_weight(const std::vector<double> &laplacians,
                             const AuxMeasure &m) {
  if (laplacians.size() != static_cast<std::size_t>(2 * m.N - 1))
    throw LengthError("expected 2N - 1 interior Laplacians");
  double s = 0.0;
  for (double L : laplacians)
    s += std::abs(L + m.F_bar);
  return -m.lambda1 * s - static_cast<double>(laplacians.size()) * m.log_Z();
}

inline std::vector<double> interior_laplacians(const DiscretePath &d) {
  std::vector<double> L;
  for (int i = -d.N + 1; i <= d.N - 1; ++i)
    L.push_back(d.delta *
                static_cast<double>(d.unit(i + 1) - 2 * d.unit(i) + d.unit(i - 1)));
  return L;
}

inline double aux_path_probability(const DiscretePath &d, const AuxMeasure &m) {
  if (d.N != m.N)
    throw LengthError("path and measure disagree on N");
  return aux_log_weight(interior_laplacians(d), m);
}

/// Total mass of the measure over Laplacian assignments restricted, per
/// site, to the 2 radius + 1 grid points nearest to -F_bar. Enumerates all
/// assignments.
inline double brute_force_mass(const AuxMeasure &m, int radius) {
  const int sites = 2 * m.N - 1;
  const auto k0 = static_cast<long>(std::nearbyint(-m.F_bar / m.delta));
  std::vector<int> digit(sites, -radius);
  std::vector<double> L(sites);
  // Neumaier summation: the enumeration can run to tens of millions of terms.
  double total = 0.0, comp = 0.0;
  while (true) {
    for (int s = 0; s < sites; ++s)
      L[s] = m.delta * static_cast<double>(k0 + digit[s]);
    const double w = std::exp(aux_log_weight(L, m));
    const double t = total + w;
    comp += std::abs(total) >= w ? (total - t) + w : (w - t) + total;
    total = t;
    int s = 0;
    while (s < sites && digit[s] == radius)
      digit[s++] = -radius;
    if (s == sites)
      break;
    ++digit[s];
  }
  return total + comp;
}

/// Upper bound on the per-site mass omitted by brute_force_mass.
inline double truncation_tail(const AuxMeasure &m, int radius) {
  const double q = std::exp(-m.lambda1 * m.delta);
  const auto k0 = static_cast<long>(std::nearbyint(-m.F_bar / m.delta));
  double outer = 0.0;
  for (int sgn : {-1, 1}) {
    const double x = m.delta * static_cast<double>(k0 + sgn * (radius + 1)) + m.F_bar;
    outer += std::exp(-m.lambda1 * std::abs(x)) / (1.0 - q);
  }
  return outer / m.Z();
}

struct CompatibilityBound {
  double abs_sum = 0.0;     // sum |Delta_d v_bar + F_bar|
  double log_lemma = 0.0;   // N C_hat - lambda1 sum
  double log_transfer_bound = 0.0; // C_tilde N + log P~
  double C_hat = 0.0;
  double C_tilde = 0.0;
};

inline CompatibilityBound compatibility_bound(const DiscretePath &d,
                                              const RateParams &p,
                                              const AuxMeasure &m) {
  CompatibilityBound b;
  for (double L : interior_laplacians(d))
    b.abs_sum += std::abs(L + m.F_bar);
  b.C_hat = p.c_hat();
  b.C_tilde = p.c_tilde(m.Z());
  b.log_lemma = d.N * b.C_hat - m.lambda1 * b.abs_sum;
  b.log_transfer_bound = b.C_tilde * d.N + aux_path_probability(d, m);
  return b;
}

// ---------------------------------------------------------------------------
// Rate function

inline double rate_function(double F, double mu) {
  if (!(F > 0.0))
    throw DomainError("F must be positive");
  if (!(mu > 0.0))
    throw DomainError("mu must be positive");
  return F / mu - 1.0 + std::log(mu / F);
}

/// -N (C + I((1 - 2 delta) F / 8) - eta).
inline double ldp_prediction(int N, double F, double delta, double mu, double C,
                             double eta) {
  return -N * (C + rate_function((1.0 - 2.0 * delta) * F / 8.0, mu) - eta);
}

struct ForcePreconditions {
  double F_min;
  bool force_ok;
  bool epsilon_ok;
  bool ok() const noexcept { return force_ok && epsilon_ok; }
};

/// F >= 2 (1 + 2 delta) / (1 - 8 delta) and epsilon <= delta.
inline ForcePreconditions force_preconditions(double F, double delta,
                                              double epsilon) {
  ForcePreconditions p;
  p.F_min = delta < 0.125 ? 2.0 * (1.0 + 2.0 * delta) / (1.0 - 8.0 * delta)
                          : std::numeric_limits<double>::infinity();
  p.force_ok = F >= p.F_min;
  p.epsilon_ok = epsilon <= delta;
  return p;
}

// ---------------------------------------------------------------------------
// Estimation

struct Interval {
  double lo;
  double hi;
};

inline constexpr double z95 = 1.959963984540054;

inline Interval wilson_interval(std::uint64_t k, std::uint64_t n, double z = z95) {
  if (n == 0)
    return {0.0, 1.0};
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(k) / nn;
  const double z2 = z * z;
  const double centre = (p + z2 / (2 * nn)) / (1 + z2 / nn);
  const double half =
      z * std::sqrt(p * (1 - p) / nn + z2 / (4 * nn * nn)) / (1 + z2 / nn);
  // The endpoints are exact at k = 0 and k = n; rounding would leave 1e-18.
  return {k == 0 ? 0.0 : std::max(0.0, centre - half),
          k == n ? 1.0 : std::min(1.0, centre + half)};
}

struct DecayFit {
  double slope = 0.0;
  double intercept = 0.0;
  double stderr_slope = 0.0;
  double C_estimate = std::numeric_limits<double>::quiet_NaN();
  Interval slope_ci{0.0, 0.0};
  bool insufficient = false;
  std::string note;
};

struct CountRow {
  int N;
  std::uint64_t n;
  std::uint64_t k;
};

/// Weighted least squares of ln p_hat on N with p_hat = (k + 1/2) / (n + 1)
/// and delta-method weights n p / (1 - p). Throws InsufficientSamples when
/// every count is 0 or every count is n.
inline DecayFit fit_decay(const std::vector<CountRow> &rows) {
  if (rows.size() < 2)
    throw InsufficientSamples("need at least two N values");
  bool all_zero = true, all_full = true;
  for (const auto &r : rows) {
    all_zero = all_zero && r.k == 0;
    all_full = all_full && r.k == r.n;
  }
  if (all_zero)
    throw InsufficientSamples("no realization crossed at any N");
  if (all_full)
    throw InsufficientSamples("every realization crossed at every N");
  double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto &r : rows) {
    const double p = (r.k + 0.5) / (r.n + 1.0);
    const double w = static_cast<double>(r.n) * p / (1.0 - p);
    const double x = r.N, y = std::log(p);
    sw += w;
    sx += w * x;
    sy += w * y;
    sxx += w * x * x;
    sxy += w * x * y;
  }
  const double det = sw * sxx - sx * sx;
  DecayFit f;
  f.slope = (sw * sxy - sx * sy) / det;
  f.intercept = (sxx * sy - sx * sxy) / det;
  f.stderr_slope = std::sqrt(sw / det);
  f.slope_ci = {f.slope - z95 * f.stderr_slope, f.slope + z95 * f.stderr_slope};
  f.C_estimate = -1.0 / f.slope;
  return f;
}

inline nlohmann::json to_json(const DecayFit &f) {
  auto num = [](double x) {
    return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr);
  };
  nlohmann::json j{{"slope", num(f.slope)},
                   {"intercept", num(f.intercept)},
                   {"stderr", num(f.stderr_slope)},
                   {"C_estimate", num(f.C_estimate)},
                   {"slope_ci", {num(f.slope_ci.lo), num(f.slope_ci.hi)}},
                   {"insufficient", f.insufficient}};
  if (!f.note.empty())
    j["note"] = f.note;
  return j;
}

/// Outcome of one realization in the crossing experiment.
struct RealizationOutcome {
  int N = 0;
  std::uint64_t sample = 0;
  std::uint64_t seed = 0;
  int paths_found = 0;
  int nonnegative_paths = 0;
  int below = 0;          // nonnegative paths with v_bar below the triangle
  bool crossed = false;
  double max_center = std::numeric_limits<double>::quiet_NaN(); // max v_bar[0]
};

struct CrossingParams {
  FieldConfig field;
  double K = 1.0;
  TriangleHeight height = TriangleHeight::K_N_minus_1;
  PathOptions path;
};

/// One realization: all nonnegative Dirichlet paths are discretized and
/// tested against the triangle. Crossed means every nonnegative path dips
/// below it; with no nonnegative path the event holds vacuously.
inline RealizationOutcome crossing_realization(const CrossingParams &p, int N,
                                               std::uint64_t sample,
                                               std::uint64_t seed) {
  FieldConfig fc = p.field;
  fc.seed = seed;
  const ObstacleGrid grid(fc);
  const auto search = find_dirichlet_paths(grid, N, p.path, true);
  RealizationOutcome o;
  o.N = N;
  o.sample = sample;
  o.seed = seed;
  o.paths_found = static_cast<int>(search.paths.size());
  for (const auto &path : search.paths) {
    if (!path.nonnegative())
      continue;
    ++o.nonnegative_paths;
    const auto d = discretize(path);
    const auto c = crossing_check(d, p.K, p.height);
    if (c.below_triangle)
      ++o.below;
    if (!(o.max_center >= d.bar(0)))
      o.max_center = d.bar(0);
  }
  o.crossed = o.below == o.nonnegative_paths;
  return o;
}

struct CrossingEstimate {
  int N;
  double F;
  double K;
  std::uint64_t n;
  std::uint64_t k_crossed;
  std::uint64_t vacuous; // realizations without a nonnegative path
  double p_hat;
  Interval ci;
};

inline CrossingEstimate summarize_crossing(int N, double F, double K,
                                           const std::vector<RealizationOutcome> &outs) {
  CrossingEstimate e{N, F, K, outs.size(), 0, 0, 0.0, {0.0, 1.0}};
  for (const auto &o : outs) {
    e.k_crossed += o.crossed ? 1 : 0;
    e.vacuous += o.nonnegative_paths == 0 ? 1 : 0;
  }
  e.p_hat = e.n ? static_cast<double>(e.k_crossed) / e.n : 0.0;
  e.ci = wilson_interval(e.k_crossed, e.n);
  return e;
}

inline const char *crossing_csv_header() {
  return "N,F,K,n,k_crossed,p_hat,ci_lo,ci_hi";
}

inline void write_crossing_row(std::ostream &os, const CrossingEstimate &e) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%llu,%llu,%.17g,%.17g,%.17g\n",
                e.N, e.F, e.K, static_cast<unsigned long long>(e.n),
                static_cast<unsigned long long>(e.k_crossed), e.p_hat, e.ci.lo,
                e.ci.hi);
  os << buf;
}

/// Fit with InsufficientSamples folded into the record.
inline DecayFit fit_crossing(const std::vector<CrossingEstimate> &est) {
  std::vector<CountRow> rows;
  for (const auto &e : est)
    rows.push_back({e.N, e.n, e.k_crossed});
  try {
    return fit_decay(rows);
  } catch (const InsufficientSamples &ex) {
    DecayFit f;
    f.insufficient = true;
    f.note = ex.what();
    f.slope = f.intercept = f.stderr_slope = std::numeric_limits<double>::quiet_NaN();
    f.slope_ci = {f.slope, f.slope};
    return f;
  }
}

struct CrossingExperiment {
  std::vector<CrossingEstimate> estimates;
  std::vector<RealizationOutcome> outcomes; // task order
  DecayFit fit;
};

/// Task index of (N position, sample) in the crossing ensemble.
inline std::uint64_t crossing_task(std::size_t n_index, std::uint64_t sample,
                                   std::uint64_t n_samples) {
  return n_index * n_samples + sample;
}

/// Crossing probability for every N in N_list with n_samples realizations
/// each. Realization seeds are split from `seed` by task index, so results
/// do not depend on the worker count.
inline CrossingExperiment mc_crossing_probability(
    const CrossingParams &p, const std::vector<int> &N_list,
    std::uint64_t n_samples, std::uint64_t seed, unsigned workers = 1,
    const std::function<void(std::size_t, const RealizationOutcome &)> &sink = {}) {
  if (n_samples < 100)
    throw ConfigError("n_samples", "must be at least 100");
  if (N_list.empty() || !std::is_sorted(N_list.begin(), N_list.end()))
    throw ConfigError("N_list", "must be nonempty and ascending");
  const std::size_t total = N_list.size() * n_samples;
  auto task = [&](std::size_t t) {
    const std::size_t ni = t / n_samples;
    const std::uint64_t s = t % n_samples;
    return crossing_realization(p, N_list[ni], s, rng::split_seed(seed, t));
  };
  CrossingExperiment ex;
  ex.outcomes = run_indexed<RealizationOutcome>(total, workers, task, sink);
  for (std::size_t ni = 0; ni < N_list.size(); ++ni) {
    std::vector<RealizationOutcome> slice(
        ex.outcomes.begin() + static_cast<long>(ni * n_samples),
        ex.outcomes.begin() + static_cast<long>((ni + 1) * n_samples));
    ex.estimates.push_back(summarize_crossing(N_list[ni], p.field.F, p.K, slice));
  }
  ex.fit = fit_crossing(ex.estimates);
  return ex;
}

} // namespace romlab
