#pragma once

#include <stdexcept>
#include <string>

namespace iia {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A model could not be decomposed into tappable layers, or a tap was misused.
class InstrumentationError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// Operation called in the wrong order (e.g. backward before forward).
class StateError : public Error {
 public:
  using Error::Error;
};

class UnsupportedArchitecture : public Error {
 public:
  using Error::Error;
};

class CorruptArchive : public Error {
 public:
  using Error::Error;
};

class TrainingBudgetError : public Error {
 public:
  using Error::Error;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

}  // namespace iia
