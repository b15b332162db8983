#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <nlohmann/json.hpp>

#include "romlab/errors.hpp"
#include "romlab/rng.hpp"

// Random environment of the obstacle model.
//
// Obstacles sit on the lattice Z x (Z + 1/2). The obstacle at column i and
// row r occupies the square [i - delta, i + delta] x [r + 1/2 - delta,
// r + 1/2 + delta] and carries an i.i.d. strength l(i, r) ~ Exp(lambda0).
// Throughout the library a "row" is the integer r of the obstacle line
// s = r + 1/2.

namespace romlab {

/// exp(-1 / (1 - t^2)) on |t| < 1, zero elsewhere.
inline double smooth_bump_1d(double t) noexcept {
  const double q = 1.0 - t * t;
  return q > 0.0 ? std::exp(-1.0 / q) : 0.0;
}

/// Separable bump phi(x, s) = peak * beta(x/delta) beta(s/delta) / beta(0)^2,
/// supported in [-delta, delta]^2 with max phi = phi(0, 0) = peak.
struct BumpProfile {
  double delta = 0.1;
  double peak = 1.0;

  /// One-dimensional factor normalized to 1 at the origin.
  double factor(double offset) const noexcept {
    return std::exp(1.0) * smooth_bump_1d(offset / delta);
  }

  double operator()(double dx, double ds) const noexcept {
    return peak * factor(dx) * factor(ds);
  }

  /// Integral of the unit-peak 1-D factor over [-delta, delta].
  double factor_integral() const {
    using boost::math::quadrature::gauss_kronrod;
    const double half = gauss_kronrod<double, 31>::integrate(
        [](double t) { return smooth_bump_1d(t); }, 0.0, 1.0, 15, 1e-14);
    return std::exp(1.0) * delta * 2.0 * half;
  }

  /// Total mass of phi.
  double integral() const {
    const double one = factor_integral();
    return peak * one * one;
  }
};

/// Smooth cutoff chi_A^eps(x): 0 on the strips |x - i| <= delta, 1 once
/// |x - i| >= delta + eps, and the cubic smoothstep 3t^2 - 2t^3 on the collars.
/// Unit-periodic. With `unit` set the cutoff is replaced by the constant 1.
struct Cutoff {
  double delta = 0.1;
  double epsilon = 0.05;
  bool unit = false;

  double operator()(double x) const noexcept {
    if (unit)
      return 1.0;
    const double d = std::abs(x - std::nearbyint(x));
    if (d <= delta)
      return 0.0;
    if (d >= delta + epsilon)
      return 1.0;
    const double t = (d - delta) / epsilon;
    return t * t * (3.0 - 2.0 * t);
  }

  /// Integral of chi over [a, b] within one cell, split at the kinks.
  template <class Weight>
  double integrate(double a, double b, Weight weight) const {
    using boost::math::quadrature::gauss_kronrod;
    if (b <= a)
      return 0.0;
    const double base = std::floor(a);
    double knots[] = {a,
                      base + delta,
                      base + delta + epsilon,
                      base + 1.0 - delta - epsilon,
                      base + 1.0 - delta,
                      b};
    std::sort(std::begin(knots), std::end(knots));
    double total = 0.0;
    for (int k = 0; k + 1 < 6; ++k) {
      const double lo = std::max(a, knots[k]);
      const double hi = std::min(b, knots[k + 1]);
      if (hi <= lo)
        continue;
      total += gauss_kronrod<double, 15>::integrate(
          [&](double y) { return (*this)(y)*weight(y); }, lo, hi, 10, 1e-15);
    }
    return total;
  }

  struct GapPrimitive {
    double drop; // int_0^u chi
    double bend; // int_0^u (u - y) chi
  };

  /// Closed-form integrals of chi from the gap start i + delta to i + delta + u,
  /// u in [0, 1 - 2 delta] (smoothstep antiderivatives on the collars).
  GapPrimitive gap_primitive(double u) const noexcept {
    if (unit)
      return {u, 0.5 * u * u};
    const double len = 1.0 - 2.0 * delta;
    const double e = epsilon;
    auto A = [](double t) { return t * t * t - 0.5 * t * t * t * t; };
    auto B = [](double t) {
      const double t4 = t * t * t * t;
      return 0.75 * t4 - 0.4 * t4 * t;
    };
    double P, R; // int chi, int y chi
    if (u <= e) {
      P = e * A(u / e);
      R = e * e * B(u / e);
    } else if (u <= len - e) {
      P = u - 0.5 * e;
      R = 0.35 * e * e + 0.5 * (u * u - e * e);
    } else {
      const double w = std::max(0.0, len - u);
      P = (len - e) - e * A(w / e);
      R = 0.5 * len * (len - e) - (len * e * A(w / e) - e * e * B(w / e));
    }
    return {P, u * P - R};
  }

  /// Gap slope integral: int_{delta}^{1-delta} chi(x) dx. F times this is F-hat.
  double gap_integral() const {
    return integrate(delta, 1.0 - delta, [](double) { return 1.0; });
  }

  /// int_{delta}^{1-delta} (1 - delta - y) chi(y) dy: the double integral
  /// int int_{delta}^{s} chi that enters the value change across a gap.
  double gap_moment() const {
    const double b = 1.0 - delta;
    return integrate(delta, b, [b](double y) { return b - y; });
  }
};

/// Quantile hook for the strength law: maps u in (0, 1) to a strength.
using StrengthSampler = double (*)(double u, double lambda0);

inline double exponential_sampler(double u, double lambda0) {
  return rng::exponential_from_unit(u, lambda0);
}

struct FieldConfig {
  double delta = 0.1;
  double epsilon = 0.05;
  double lambda0 = 1.0;
  double F = 0.0;
  std::optional<double> cap;
  bool mean_zero = false;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(delta > 0.0 && delta < 0.25))
      throw ConfigError("delta", "must lie in (0, 1/4)");
    if (!(epsilon > 0.0 && epsilon <= delta))
      throw ConfigError("epsilon", "must lie in (0, delta]");
    if (!(lambda0 > 0.0) || !std::isfinite(lambda0))
      throw ConfigError("lambda0", "must be positive and finite");
    if (!(F >= 0.0) || !std::isfinite(F))
      throw ConfigError("F", "must be nonnegative and finite");
    if (cap && !(*cap >= 0.0))
      throw ConfigError("cap", "must be nonnegative");
  }
};

inline void to_json(nlohmann::json &j, const FieldConfig &c) {
  j = nlohmann::json{{"delta", c.delta},
                     {"epsilon", c.epsilon},
                     {"lambda0", c.lambda0},
                     {"F", c.F},
                     {"cap", nullptr},
                     {"mean_zero", c.mean_zero},
                     {"seed", c.seed}};
  if (c.cap)
    j["cap"] = *c.cap;
}

/// Strict parse: unknown keys and wrong types raise ConfigError naming the key.
/// Missing keys keep their defaults.
inline FieldConfig field_config_from_json(const nlohmann::json &j,
                                          const std::string &path = "field") {
  if (!j.is_object())
    throw ConfigError(path, "expected an object");
  FieldConfig c;
  for (const auto &[key, value] : j.items()) {
    const std::string where = path + "." + key;
    auto number = [&]() {
      if (!value.is_number())
        throw ConfigError(where, "expected a number");
      return value.get<double>();
    };
    if (key == "delta")
      c.delta = number();
    else if (key == "epsilon")
      c.epsilon = number();
    else if (key == "lambda0")
      c.lambda0 = number();
    else if (key == "F")
      c.F = number();
    else if (key == "cap")
      c.cap = value.is_null() ? std::nullopt : std::optional<double>(number());
    else if (key == "mean_zero") {
      if (!value.is_boolean())
        throw ConfigError(where, "expected a boolean");
      c.mean_zero = value.get<bool>();
    } else if (key == "seed") {
      if (!value.is_number_unsigned() && !value.is_number_integer())
        throw ConfigError(where, "expected an unsigned integer");
      if (value.is_number_integer() && value.get<std::int64_t>() < 0)
        throw ConfigError(where, "expected an unsigned integer");
      c.seed = value.get<std::uint64_t>();
    } else
      throw ConfigError(where, "unknown key");
  }
  try {
    c.validate();
  } catch (const ConfigError &e) {
    throw ConfigError(path + "." + e.field(),
                      std::string(e.what()).substr(e.field().size() + 2));
  }
  return c;
}

inline void from_json(const nlohmann::json &j, FieldConfig &c) {
  c = field_config_from_json(j);
}

/// Lazily sampled obstacle lattice. Immutable; copies are cheap and share no
/// state, so grids can be handed to concurrent workers freely.
class ObstacleGrid {
public:
  explicit ObstacleGrid(FieldConfig config) : config_(config) {
    config_.validate();
    bump_ = BumpProfile{config_.delta, 1.0};
    cutoff_ = Cutoff{config_.delta, config_.epsilon, false};
  }

  const FieldConfig &config() const noexcept { return config_; }
  const BumpProfile &bump() const noexcept { return bump_; }
  const Cutoff &cutoff() const noexcept { return cutoff_; }
  double delta() const noexcept { return config_.delta; }
  double F() const noexcept { return config_.F; }

  /// Copy with strengths truncated to min(M, l). M = +inf is a no-op.
  ObstacleGrid with_cap(std::optional<double> M) const {
    ObstacleGrid g = *this;
    g.config_.cap = M;
    g.config_.validate();
    return g;
  }

  ObstacleGrid with_force(double F) const {
    ObstacleGrid g = *this;
    g.config_.F = F;
    g.config_.validate();
    return g;
  }

  /// Replaces the cutoff chi_A^eps by the constant 1 (analytic test mode).
  ObstacleGrid with_unit_cutoff(bool on = true) const {
    ObstacleGrid g = *this;
    g.cutoff_.unit = on;
    return g;
  }

  /// Marks columns |i| >= N as obstacle-free (Dirichlet extension).
  ObstacleGrid with_dirichlet_extension(std::int64_t N) const {
    ObstacleGrid g = *this;
    g.free_beyond_ = N;
    return g;
  }

  ObstacleGrid with_sampler(StrengthSampler sampler) const {
    ObstacleGrid g = *this;
    g.sampler_ = sampler;
    return g;
  }

  static double row_center(std::int64_t row) noexcept {
    return static_cast<double>(row) + 0.5;
  }
  /// Row whose obstacle line is nearest to s.
  static std::int64_t row_of(double s) noexcept {
    return static_cast<std::int64_t>(std::floor(s));
  }
  static std::int64_t column_of(double x) noexcept {
    return static_cast<std::int64_t>(std::nearbyint(x));
  }

  /// Obstacle strength l(i, r); capped if a cap is set.
  double strength(std::int64_t column, std::int64_t row) const noexcept {
    if (free_beyond_ && std::abs(column) >= *free_beyond_)
      return 0.0;
    const double u = rng::to_open_unit(rng::hash3(config_.seed, column, row));
    const double l = sampler_(u, config_.lambda0);
    return config_.cap ? std::min(*config_.cap, l) : l;
  }

  /// Sum of l(i, j) phi((x, s) - b_ij) over the obstacle containing (x, s).
  /// Squares are disjoint (delta < 1/4), so at most one term is nonzero.
  double obstacle_load(double x, double s) const noexcept {
    const std::int64_t i = column_of(x);
    const std::int64_t r = row_of(s);
    const double dx = x - static_cast<double>(i);
    const double ds = s - row_center(r);
    if (std::abs(dx) >= config_.delta || std::abs(ds) >= config_.delta)
      return 0.0;
    return strength(i, r) * bump_(dx, ds);
  }

  /// Background g(x, s): (1/lambda0) sum phi when mean_zero is set, else 0.
  double background(double x, double s) const noexcept {
    if (!config_.mean_zero)
      return 0.0;
    const std::int64_t i = column_of(x);
    const std::int64_t r = row_of(s);
    return bump_(x - static_cast<double>(i), s - row_center(r)) /
           config_.lambda0;
  }

  /// Random field f(x, s) of the original problem.
  double field_value(double x, double s) const noexcept {
    return background(x, s) - obstacle_load(x, s);
  }

  /// f-tilde(x, s) + F chi(x): right-hand side of the auxiliary problem.
  double aux_forcing(double x, double s) const noexcept {
    return config_.F * cutoff_(x) - obstacle_load(x, s);
  }

  /// Sum of l(i, r) over rows with |r + 1/2 - center| <= half_width.
  double window_sum(std::int64_t column, double center,
                    double half_width) const noexcept {
    if (!(half_width >= 0.0))
      return 0.0;
    const auto lo =
        static_cast<std::int64_t>(std::ceil(center - half_width - 0.5));
    const auto hi =
        static_cast<std::int64_t>(std::floor(center + half_width - 0.5));
    double sum = 0.0;
    for (std::int64_t r = lo; r <= hi; ++r)
      sum += strength(column, r);
    return sum;
  }

  /// Number of rows inside the same window.
  static std::int64_t window_count(double center, double half_width) noexcept {
    if (!(half_width >= 0.0))
      return 0;
    const auto lo =
        static_cast<std::int64_t>(std::ceil(center - half_width - 0.5));
    const auto hi =
        static_cast<std::int64_t>(std::floor(center + half_width - 0.5));
    return std::max<std::int64_t>(0, hi - lo + 1);
  }

private:
  FieldConfig config_;
  BumpProfile bump_;
  Cutoff cutoff_;
  std::optional<std::int64_t> free_beyond_;
  StrengthSampler sampler_ = &exponential_sampler;
};

} // namespace romlab
