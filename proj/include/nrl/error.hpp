#pragma once

#include <stdexcept>
#include <string>

namespace nrl {

// Bad argument or violated precondition.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Dataset discovery, decoding or generation failure.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Filesystem or serialization failure. Messages always carry the path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Optimization diverged or a training stage could not complete.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace nrl
