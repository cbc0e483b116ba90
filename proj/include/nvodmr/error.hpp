#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>

namespace nvodmr {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite, out-of-range or non-physical input.
class InvalidParameter : public Error {
public:
    using Error::Error;
};

/// A nonlinear fit did not converge or produced an unusable answer.
class FitFailure : public Error {
public:
    using Error::Error;
};

/// Too few events (jumps, segments, samples) for a meaningful estimate.
class InsufficientStatistics : public Error {
public:
    using Error::Error;
};

/// Malformed input file; the message carries the offending line number.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

namespace detail {

inline void require_finite(double v, std::string_view name) {
    if (!std::isfinite(v)) {
        throw InvalidParameter(std::string(name) + " must be finite");
    }
}

inline void require_positive(double v, std::string_view name) {
    require_finite(v, name);
    if (!(v > 0.0)) {
        throw InvalidParameter(std::string(name) + " must be positive");
    }
}

inline void require_non_negative(double v, std::string_view name) {
    require_finite(v, name);
    if (v < 0.0) {
        throw InvalidParameter(std::string(name) + " must be non-negative");
    }
}

}  // namespace detail
}  // namespace nvodmr
