#pragma once

#include <stdexcept>

namespace pfcm {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// bad configuration or usage
class ConfigError : public Error {
 public:
  using Error::Error;
};

// malformed or inconsistent input data
class DataError : public Error {
 public:
  using Error::Error;
};

// tensor / weight-layout mismatches
class ShapeError : public Error {
 public:
  using Error::Error;
};

}  // namespace pfcm
