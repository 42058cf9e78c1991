#pragma once

#include <stdexcept>
#include <string>

namespace retloc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data cannot support the requested computation (too few samples,
/// empty inputs, missing 3D coordinates, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

class InsufficientData : public DataError {
 public:
  using DataError::DataError;
};

class InsufficientSamples : public DataError {
 public:
  using DataError::DataError;
};

class EmptyFeatureSet : public DataError {
 public:
  using DataError::DataError;
};

class NoUsableFeatures : public DataError {
 public:
  using DataError::DataError;
};

class EmptyDatabase : public DataError {
 public:
  using DataError::DataError;
};

class VocabularyMismatch : public DataError {
 public:
  using DataError::DataError;
};

class TooFewPoints : public DataError {
 public:
  using DataError::DataError;
};

class EmptyLog : public DataError {
 public:
  using DataError::DataError;
};

/// A persisted file failed validation. `offset()` is the byte offset at which
/// the reader gave up.
class CorruptFile : public DataError {
 public:
  CorruptFile(const std::string& what, std::size_t offset)
      : DataError(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class VersionMismatch : public DataError {
 public:
  using DataError::DataError;
};

class NotInitialized : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace retloc
