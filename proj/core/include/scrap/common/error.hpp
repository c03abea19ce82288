#pragma once

#include <stdexcept>
#include <string>

namespace scrap {

// Base for every error the library raises. The CLI maps the subclasses onto
// process exit codes (config 2, data 3, integrity 4).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class IntegrityError : public Error {
 public:
  using Error::Error;
};

// Raised when a caller asks for something the current state forbids
// (backward without forward, adjudicating an unflagged record, ...).
class StateError : public Error {
 public:
  using Error::Error;
};

}  // namespace scrap
