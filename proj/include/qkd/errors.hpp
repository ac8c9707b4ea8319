#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace qkd {

/// Base class for all errors raised by this library.
struct QkdError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Detector channel code outside {0,1,2,3}.
struct InvalidChannel final : QkdError {
    using QkdError::QkdError;
};

/// Probability argument outside [0,1].
struct InvalidProbability final : QkdError {
    using QkdError::QkdError;
};

/// Comparator input word outside the 10-bit range [0,1023].
struct InvalidRandomWord final : QkdError {
    using QkdError::QkdError;
};

/// Time-tag stream not sorted by timestamp.
struct StreamOrderError final : QkdError {
    using QkdError::QkdError;
};

/// No significant correlation peak; offset recovery impossible.
struct SyncFailed final : QkdError {
    using QkdError::QkdError;
};

/// Histogram has no usable peak above baseline.
struct NoPeak final : QkdError {
    using QkdError::QkdError;
};

/// Numeric argument outside the mathematical domain of an operation.
struct DomainError final : QkdError {
    using QkdError::QkdError;
};

/// Error rate at a value (0 or 1) where the fluctuation bound degenerates.
struct DegenerateErrorRate final : QkdError {
    using QkdError::QkdError;
};

/// No theta in [0, 0.5 - e_b] achieves the requested failure probability.
struct InsecureRegime final : QkdError {
    using QkdError::QkdError;
};

/// A basis holds zero sifted bits where at least one is required.
struct EmptyBasis final : QkdError {
    using QkdError::QkdError;
};

/// Invalid or inconsistent run configuration.
struct ConfigError final : QkdError {
    using QkdError::QkdError;
};

/// Malformed input file. Carries the 1-based line number when known.
struct ParseError final : QkdError {
    explicit ParseError(const std::string& msg, std::uint64_t line_no = 0)
        : QkdError(line_no ? msg + " (line " + std::to_string(line_no) + ")" : msg),
          line(line_no) {}
    std::uint64_t line;
};

/// Every candidate bias on the grid yields zero secure key.
struct NoSecureBias final : QkdError {
    using QkdError::QkdError;
};

} // namespace qkd
