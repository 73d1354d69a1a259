#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dml {

// Base of every error the library raises. Callers that only need a message can
// catch this; the CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NormalizationError : public Error {
 public:
  using Error::Error;
};

class PoolingError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class DegenerateBatchError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class SamplingError : public Error {
 public:
  using Error::Error;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// File format violations. `where` is a byte offset for binary files and a
// 1-based line number for text files.
class LoadError : public Error {
 public:
  LoadError(const std::string& what, std::size_t where)
      : Error(what), where_(where) {}
  std::size_t where() const noexcept { return where_; }

 private:
  std::size_t where_;
};

// Raised by the trainer; carries the step at which training stopped.
class TrainingAborted : public Error {
 public:
  TrainingAborted(const std::string& what, long step)
      : Error(what), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

}  // namespace dml
