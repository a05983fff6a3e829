#pragma once

#include <stdexcept>
#include <string>

namespace m2d {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shapes do not line up (matmul inner dims, hadamard ranks, ...).
struct DimensionError : Error {
  using Error::Error;
};

// An index is outside its valid range (segment bounds, candidate ids, ...).
struct IndexError : Error {
  using Error::Error;
};

// The caller violated an API contract (missing grad, empty query, ...).
struct UsageError : Error {
  using Error::Error;
};

// A configuration value is out of its documented range.
struct ConfigError : Error {
  using Error::Error;
};

// Token index outside the vocabulary.
struct VocabError : Error {
  using Error::Error;
};

// A file could not be decoded; carries a position when known.
struct ParseError : Error {
  using Error::Error;
};

// A numeric guard tripped (non-finite value, probability outside (0,1), ...).
struct NumericError : Error {
  using Error::Error;
};

// Input that makes the requested quantity undefined (e.g. all-zero losses).
struct DegenerateInputError : Error {
  using Error::Error;
};

}  // namespace m2d
