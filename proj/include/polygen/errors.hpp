#pragma once

#include <stdexcept>
#include <string>

namespace polygen {

// Bad arguments, malformed records, violated preconditions. CLI maps this to exit 1.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem and format failures. CLI maps this to exit 2.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace polygen
