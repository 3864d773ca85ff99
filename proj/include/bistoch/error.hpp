#pragma once

#include <stdexcept>
#include <string>

namespace bistoch {

// Malformed or out-of-contract input (bad records, mismatched shapes, ...).
class invalid_input : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Pearson correlation requested on a zero-variance matrix.
class undefined_correlation : public invalid_input {
 public:
  using invalid_input::invalid_input;
};

// A numerical invariant was violated during a computation.
class numerical_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace bistoch
