#pragma once

#include <stdexcept>
#include <string>

namespace w2flow {

/// Raised on violated preconditions and invalid inputs throughout the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace w2flow
