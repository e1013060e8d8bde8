#pragma once

#include <stdexcept>
#include <string>

namespace darf {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape or length contracts violated.
struct DimensionError : Error {
    using Error::Error;
};

// backward() on a tape whose gradients were already propagated.
struct StaleGraphError : Error {
    using Error::Error;
};

// Non-finite values, non-PSD covariances, degenerate metric inputs.
struct NumericalError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct MissingArtifactError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// Data-level contract failures (e.g. no non-vocal track to pick as target).
struct DataError : Error {
    using Error::Error;
};

}  // namespace darf
