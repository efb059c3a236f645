#pragma once

#include <stdexcept>
#include <string>

namespace kanbench {

/// Base class for all errors thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Invalid configuration: bad preset name, bad hyperparameter, unknown config key.
struct ConfigError : Error {
    using Error::Error;
};

/// Tensor shape / dimension mismatch.
struct ShapeError : Error {
    using Error::Error;
};

/// Numeric failure: divergence, non-finite state, failed factorization.
struct NumericError : Error {
    using Error::Error;
};

/// File / artifact problems: missing paths, bad magic, truncated blobs.
struct IoError : Error {
    using Error::Error;
};

/// Misuse of the differentiation record (detached loss, inactive tape).
struct TapeError : Error {
    using Error::Error;
};

} // namespace kanbench
