#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace romlab {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameter or configuration; `field()` names the offending key path.
class ConfigError : public Error {
public:
  ConfigError(std::string field, const std::string &what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string &field() const noexcept { return field_; }

private:
  std::string field_;
};

class StabilityViolation : public Error {
public:
  using Error::Error;
};

class GridMismatch : public Error {
public:
  using Error::Error;
};

/// Richardson estimate of a strip integration exceeded the ODE tolerance.
class StepTooCoarse : public Error {
public:
  StepTooCoarse(double estimate, double tolerance)
      : Error(message(estimate, tolerance)), estimate_(estimate) {}
  double estimate() const noexcept { return estimate_; }

private:
  static std::string message(double estimate, double tolerance) {
    char buf[128];
    std::snprintf(buf, sizeof buf,
                  "strip integration error estimate %.3g exceeds tolerance %.3g",
                  estimate, tolerance);
    return buf;
  }
  double estimate_;
};


/// A shooting trajectory left the admissible band |v| <= v_max.
class Blowup : public Error {
public:
  Blowup(double x, double v)
      : Error("path escaped at x=" + std::to_string(x) +
              " with v=" + std::to_string(v)),
        x_(x), v_(v) {}
  double x() const noexcept { return x_; }
  double v() const noexcept { return v_; }

private:
  double x_;
  double v_;
};

class DomainError : public Error {
public:
  using Error::Error;
};

class LengthError : public Error {
public:
  using Error::Error;
};

} // namespace romlab
