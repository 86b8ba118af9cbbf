#pragma once

#include <stdexcept>
#include <string>

namespace f2s {

// Bad or missing configuration: unknown keys, missing merge list, version
// mismatch between an artifact and the running build.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input data that violates a precondition: empty streams, unreadable files,
// malformed artifacts.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite loss or similar numeric breakdown during training.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace f2s
