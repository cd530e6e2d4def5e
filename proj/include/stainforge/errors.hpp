#pragma once

#include <stdexcept>
#include <string>

namespace stainforge {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad caller-supplied data (shapes, ranges, missing files named by the user).
struct InputError : Error {
    using Error::Error;
};

// Bad configuration (unknown keys, out-of-range values, backend mismatch).
struct ConfigError : Error {
    using Error::Error;
};

// Filesystem / codec failures.
struct IoError : Error {
    using Error::Error;
};

// Numerical failure beyond tolerance (non-PSD covariance, etc.).
struct NumericError : Error {
    using Error::Error;
};

// Optimization diverged; message carries the step index and diagnostics.
struct TrainingError : Error {
    using Error::Error;
};

// Backend cannot provide the requested feature (e.g. no feature hierarchy).
struct CapabilityError : Error {
    using Error::Error;
};

}  // namespace stainforge
