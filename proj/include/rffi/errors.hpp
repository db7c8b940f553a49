#pragma once

#include <stdexcept>
#include <string>

namespace rffi {

// Contract violations on caller-supplied data or configuration.
// The CLI maps these to exit code 2.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// File and format problems discovered while reading or writing artifacts.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message)
{
    if (!condition) {
        throw ValidationError(message);
    }
}

}  // namespace rffi
