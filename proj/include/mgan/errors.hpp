#pragma once
#include <stdexcept>
#include <string>

namespace mgan {

// Error taxonomy mirrored by the CLI exit codes:
//   ConfigError -> 2, InputError/ValidationError -> 3, NumericError -> 4.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct InputError : std::runtime_error {
    explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Data violates a declared invariant (bad label values, shape mismatch, ...).
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite loss or other numeric breakdown during training.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Phantom geometry that cannot be satisfied (tumors do not fit).
struct GenerationError : std::runtime_error {
    explicit GenerationError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mgan
