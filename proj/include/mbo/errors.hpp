#pragma once

#include <stdexcept>

namespace mbo {

/// Malformed or truncated persisted content.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Persisted content written by an incompatible format version.
struct VersionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace mbo
