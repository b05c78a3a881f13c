#pragma once

#include <stdexcept>
#include <string>

namespace volley {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Data does not fit the target (slot vector, batch, padding grid).
class OverflowError : public Error {
 public:
  using Error::Error;
};

// Operands disagree on slot count or matrix dimensions.
class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

// Kernel larger than the input image.
class KernelTooLarge : public Error {
 public:
  using Error::Error;
};

// IDX magic number mismatch.
class BadMagic : public Error {
 public:
  using Error::Error;
};

// File ended before the declared payload.
class TruncatedFile : public Error {
 public:
  using Error::Error;
};

class MissingFile : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class LabelOutOfRange : public Error {
 public:
  using Error::Error;
};

}  // namespace volley
