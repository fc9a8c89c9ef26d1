#pragma once

#include <stdexcept>
#include <string>

namespace prunelens {

// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Malformed input document or file (exit code 2 at the CLI).
class InputError : public Error {
public:
  using Error::Error;
};

class ParseError : public InputError {
public:
  using InputError::InputError;
};

// Architecture failed structural or shape validation.
class ValidationError : public InputError {
public:
  using InputError::InputError;
};

// Bad magic, version, dtype or payload in a tensor container.
class FormatError : public InputError {
public:
  using InputError::InputError;
};

// Tensor set disagrees with the architecture it is used with.
class ShapeError : public InputError {
public:
  using InputError::InputError;
};

// A quota allocator cannot meet the requested target under its constraints.
class InfeasibleError : public Error {
public:
  using Error::Error;
};

class NumericError : public Error {
public:
  using Error::Error;
};

} // namespace prunelens
