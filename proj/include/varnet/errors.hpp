#pragma once

#include <stdexcept>
#include <string>

namespace varnet {

// Base class for all toolkit errors. CLI catches this and turns it into a
// one-line message with nonzero exit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad values or incompatible shapes at an operator boundary.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// Bad generation parameters (mask specs, configs).
class InvalidParams : public Error {
 public:
  using Error::Error;
};

// Structurally valid input that cannot be processed (e.g. all-zero ACS).
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

// Iterative solver blow-up; message names the offending step.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// File ingest failure; message names the missing/invalid field.
class IngestError : public Error {
 public:
  using Error::Error;
};

// Checkpoint checksum or format-version failure.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// Checkpoint/model configuration disagreement; message names both sides.
class ConfigMismatch : public Error {
 public:
  using Error::Error;
};

// Aborted optimization run; message carries epoch/batch diagnostics.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace varnet
