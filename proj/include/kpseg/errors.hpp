#pragma once

#include <stdexcept>
#include <string>

namespace kpseg {

// Invalid argument to an operation (bad shape, non-positive radius, ...).
struct ArgumentError : std::invalid_argument {
  explicit ArgumentError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Malformed file content. Carries file + line/offset context in the message.
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Structurally valid input with invalid values (non-finite coordinate, bad label).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace kpseg
