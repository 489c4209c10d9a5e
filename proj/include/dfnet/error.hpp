#ifndef DFNET_ERROR_HPP
#define DFNET_ERROR_HPP

#include <stdexcept>
#include <string>

namespace dfnet {

// Error taxonomy, mapped to process exit codes by the CLI:
// UsageError -> 1, DataError -> 2, NumericError -> 3.

struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or inconsistent input data (corpus files, checkpoints).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape mismatch in a tensor primitive; message names the primitive.
struct DimensionError : UsageError {
  explicit DimensionError(const std::string& msg) : UsageError(msg) {}
};

// Invalid domain for a numeric primitive (empty softmax axis, log of
// a non-positive value with checks enabled).
struct DomainError : UsageError {
  explicit DomainError(const std::string& msg) : UsageError(msg) {}
};

}  // namespace dfnet

#endif  // DFNET_ERROR_HPP
