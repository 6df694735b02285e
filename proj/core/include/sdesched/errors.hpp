#pragma once

#include <stdexcept>
#include <string>

namespace sdesched {

/// Invalid arguments, out-of-range parameters, malformed documents.
/// The CLI maps this family to exit code 2.
class ValidationError : public std::invalid_argument {
public:
    explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

/// Internal numerical failure (quadrature breakdown, singular matrix,
/// non-finite evaluation). The CLI maps this family to exit code 70.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// ODE state exceeded the overflow guard; carries the last valid time in the message.
class DivergenceError : public NumericError {
public:
    explicit DivergenceError(const std::string& what) : NumericError(what) {}
};

/// A requested SNR level is outside the range a schedule can reach.
class CoverageError : public NumericError {
public:
    explicit CoverageError(const std::string& what) : NumericError(what) {}
};

/// A stored trajectory is too coarse for a stable derived quantity.
class ResolutionError : public NumericError {
public:
    explicit ResolutionError(const std::string& what) : NumericError(what) {}
};

}  // namespace sdesched
