#pragma once

#include <stdexcept>
#include <string>

namespace tprox {

// Invalid configuration or CLI usage (exit code 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite loss or activations during training (exit code 3).
class NumericalDivergence : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Missing, unreadable or malformed files (exit code 4).
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace tprox
