#pragma once

#include <stdexcept>
#include <string>

namespace bikd {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape disagreements between operands.
struct DimensionError : Error { using Error::Error; };
// Math domain violations: log of nonpositive, division by zero, probabilities outside (0,1).
struct DomainError : Error { using Error::Error; };
// Invalid configuration values or combinations.
struct ConfigError : Error { using Error::Error; };
// Bad data: out-of-range labels, NaN losses, malformed files.
struct DataError : Error { using Error::Error; };
// API contract misuse: non-scalar loss, tensors from another tape.
struct ContractError : Error { using Error::Error; };
// Optimization diverged.
struct TrainingError : Error { using Error::Error; };
// Inputs on which the requested quantity is undefined (constant maps, zero denominators).
struct DegenerateInputError : Error { using Error::Error; };
// Overflow, non-finite intermediate values, rank deficiency beyond rescue.
struct NumericError : Error { using Error::Error; };
// File read/write failures.
struct IoError : Error { using Error::Error; };

} // namespace bikd
