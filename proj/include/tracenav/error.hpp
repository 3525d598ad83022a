#pragma once

#include <stdexcept>
#include <string>

namespace tracenav {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input that violates a documented precondition (non-finite values, size
// mismatches, malformed files).
class InputError : public Error {
 public:
  using Error::Error;
};

// Geometry that admits no unique answer: coincident points, collinear
// landmarks, parallel line/plane.
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

class NoIntersection : public DegenerateInput {
 public:
  using DegenerateInput::DegenerateInput;
};

// A trace session that produced no usable surface samples.
class EmptyTrace : public Error {
 public:
  using Error::Error;
};

class ParseError : public InputError {
 public:
  using InputError::InputError;
};

}  // namespace tracenav
