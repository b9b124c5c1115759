#pragma once

#include <stdexcept>
#include <string>

namespace dpinn {

// Bad configuration or bad input data. The CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Failure while computing (non-finite values, missing messages, I/O).
// The CLI maps this to exit code 2.
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dpinn
