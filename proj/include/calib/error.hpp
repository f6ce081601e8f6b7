#pragma once

#include <stdexcept>
#include <string>

namespace calib {

/// Raised when inputs violate a documented precondition (bad probabilities,
/// labels out of range, malformed files, invalid bound inputs).
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a numerical routine cannot produce a result (quadrature
/// non-convergence, non-finite training objective, failed experiment cell).
class ExperimentError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace calib
