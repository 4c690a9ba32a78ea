#pragma once

#include <stdexcept>
#include <string>

namespace ivinfer {

// User/configuration problems (bad flags, malformed input). CLI exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Input file does not match the declared schema (missing role column, ...).
struct SchemaError : ConfigError {
    explicit SchemaError(const std::string& msg) : ConfigError(msg) {}
};

// A cell could not be parsed as a number.
struct ParseError : ConfigError {
    explicit ParseError(const std::string& msg) : ConfigError(msg) {}
};

// Numerical failure (rank deficiency, non-convex objective, ...). CLI exit code 3.
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace ivinfer
