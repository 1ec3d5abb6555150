#pragma once

#include <stdexcept>
#include <string>

namespace promptloop {

/// Raised for malformed or inconsistent input data: bad pixmaps, bad scripts,
/// mismatched policy structures. The CLI maps it to exit code 3.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace promptloop
