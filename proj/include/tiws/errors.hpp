#pragma once

#include <stdexcept>

namespace tiws {

// Malformed or unreadable input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A labeled set lacks the positives (or negatives) an operation needs.
class LabelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace tiws
