#pragma once

#include <stdexcept>
#include <string>

namespace greskit {

// Base for everything the library throws on contract violations.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor/operation shape mismatch.
struct ShapeError : Error {
  using Error::Error;
};

// Bad model/run configuration (dims, flags, missing params).
struct ConfigError : Error {
  using Error::Error;
};

// Token id outside the vocabulary, or vocab file inconsistencies.
struct VocabError : Error {
  using Error::Error;
};

// Malformed runtime inputs (empty token list, non-binary mask, ...).
struct InputError : Error {
  using Error::Error;
};

// Non-finite value where a finite one is required (loss, checked tensors).
struct NumericError : Error {
  using Error::Error;
};

// Malformed serialized artifacts (dataset/checkpoint/report files).
struct FormatError : Error {
  using Error::Error;
};

// A metric queried on records where its denominator is empty.
struct UndefinedError : Error {
  using Error::Error;
};

}  // namespace greskit
