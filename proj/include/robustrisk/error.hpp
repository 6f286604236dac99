#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace robustrisk {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Invalid argument passed to a library entry point.
class ArgumentError : public Error {
  public:
    using Error::Error;
};

/// Path simulation produced a non-finite coefficient.
class SimulationError : public Error {
  public:
    SimulationError(const std::string& msg, std::size_t path, std::size_t step)
        : Error(msg), path_(path), step_(step) {}
    std::size_t path() const noexcept { return path_; }
    std::size_t step() const noexcept { return step_; }

  private:
    std::size_t path_;
    std::size_t step_;
};

/// A loss functional evaluated to a non-finite value.
class EvaluationError : public Error {
  public:
    EvaluationError(const std::string& msg, std::size_t step) : Error(msg), step_(step) {}
    std::size_t step() const noexcept { return step_; }

  private:
    std::size_t step_;
};

/// The inverse of f' would overflow; carries the offending exponent.
class OverflowError : public Error {
  public:
    OverflowError(const std::string& msg, double exponent) : Error(msg), exponent_(exponent) {}
    double exponent() const noexcept { return exponent_; }

  private:
    double exponent_;
};

/// The normalization constant could not be found.
class CalibrationError : public Error {
  public:
    using Error::Error;
};

/// The finite-difference solver failed (Picard non-convergence, bad grid).
class PdeError : public Error {
  public:
    PdeError(const std::string& msg, std::size_t step, double residual)
        : Error(msg), step_(step), residual_(residual) {}
    std::size_t step() const noexcept { return step_; }
    double residual() const noexcept { return residual_; }

  private:
    std::size_t step_;
    double residual_;
};

/// Invalid run configuration.
class ConfigError : public Error {
  public:
    using Error::Error;
};

} // namespace robustrisk
