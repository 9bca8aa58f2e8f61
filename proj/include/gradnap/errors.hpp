#pragma once

#include <stdexcept>
#include <string>

namespace gradnap {

/// Bad architecture/config combination, shape mismatch with a spec.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed or mismatched data/weight files, label misalignment.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Out-of-range layer/class/neuron indices.
struct IndexError : std::out_of_range {
    explicit IndexError(const std::string& msg) : std::out_of_range(msg) {}
};

/// Non-finite values where finite math was required.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace gradnap
