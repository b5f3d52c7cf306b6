#pragma once

#include <stdexcept>
#include <string>

namespace ctsgan {

// Base of every error thrown by the library. The CLI maps UsageError to
// exit code 2 and everything else to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Malformed or missing file metadata.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Metadata parses but the payload disagrees with it.
class CorruptFileError : public Error {
 public:
  using Error::Error;
};

class AssemblyError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class PlacementError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace ctsgan
