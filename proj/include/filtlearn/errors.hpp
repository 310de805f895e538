#pragma once

#include <stdexcept>
#include <string>

namespace filtlearn {

/// Malformed files, unparsable configs, bad user input. CLI exit code 2.
struct InputError : std::runtime_error {
    explicit InputError(const std::string& m) : std::runtime_error(m) {}
};

/// Checkpoint/config mismatches, locked output dirs. CLI exit code 3.
struct StateError : std::runtime_error {
    explicit StateError(const std::string& m) : std::runtime_error(m) {}
};

/// Non-finite losses or weights mid-run. CLI exit code 4.
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& m) : std::runtime_error(m) {}
};

} // namespace filtlearn
