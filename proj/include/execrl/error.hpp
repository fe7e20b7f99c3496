#pragma once

#include <stdexcept>
#include <string>

namespace execrl {

// Malformed or inconsistent configuration, including CLI input.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Input data that violates a domain invariant (bad prices, bad CSV rows).
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Required CSV column absent.
struct SchemaError : ValidationError {
    using ValidationError::ValidationError;
};

// Tensor shape incompatibility.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// API called out of order or with arguments its contract forbids.
struct UsageError : std::logic_error {
    using std::logic_error::logic_error;
};

// An internal invariant was observed broken.
struct IntegrityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace execrl
