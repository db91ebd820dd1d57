#pragma once

#include <stdexcept>
#include <string>

namespace pstrat {

// Malformed input: bad file, bad column, illegal flag combination.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The data are well-formed but the requested estimate cannot be formed
// (empty cell, zero weight mass, separation, weak instrument, ...).
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A property that must hold by construction was violated. Indicates a bug.
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace pstrat
