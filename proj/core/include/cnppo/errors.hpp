#pragma once

#include <stdexcept>
#include <string>

namespace cnppo {

// Bad user-supplied value (CLI maps this to exit code 2).
class InvalidArgument : public std::invalid_argument {
 public:
  explicit InvalidArgument(const std::string& msg) : std::invalid_argument(msg) {}
};

// Mismatched array dimensions between operations.
class ShapeError : public std::invalid_argument {
 public:
  explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Analysis input is missing grid cells or required columns.
class MissingDataError : public std::runtime_error {
 public:
  explicit MissingDataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Training hit a non-finite loss or gradient; partial logs are flushed first.
class TrainingAborted : public std::runtime_error {
 public:
  explicit TrainingAborted(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace cnppo
