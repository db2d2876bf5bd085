#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dyntun {

/// Invalid or inconsistent run configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Numerical failure during a simulation (CLI exit code 3).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Probability reached the edge of the momentum basis.
class BasisOverflow : public NumericalError {
public:
    BasisOverflow(const std::string& what, std::int64_t rotor = -1, std::int64_t kick = -1)
        : NumericalError(what), rotor_(rotor), kick_(kick) {}

    std::int64_t rotor() const { return rotor_; }
    std::int64_t kick() const { return kick_; }

private:
    std::int64_t rotor_;
    std::int64_t kick_;
};

/// Failure of a decay or scaling fit (CLI exit code 4).
class FitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InsufficientData : public FitError {
public:
    using FitError::FitError;
};

class NonPositiveSurvival : public FitError {
public:
    using FitError::FitError;
};

/// A survival window left the support of the histogram.
class WindowOutOfBasis : public NumericalError {
public:
    using NumericalError::NumericalError;
};

}  // namespace dyntun
