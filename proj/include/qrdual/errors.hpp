#pragma once

#include <stdexcept>
#include <string>

namespace qrdual {

// Raised on malformed or non-finite input data (CSV parse failures, NaNs,
// shape mismatches). Mapped to exit code 4 by the CLI.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace qrdual
