#pragma once

#include <stdexcept>
#include <string>

namespace wordrec {

/// Raised when an input file or record fails validation. The CLI maps it to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace wordrec
