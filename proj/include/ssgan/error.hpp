#pragma once

#include <stdexcept>
#include <string>

namespace ssgan {

// Base of everything the library throws on purpose. The CLI maps
// NumericalError to exit code 2 and every other Error to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor/matrix shapes that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Caller broke a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value or combination.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf in inputs, gradients, or losses.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

enum class DatasetErrorKind {
  kMissingRoi,
  kBadLayout,
  kVoxelLengthMismatch,
  kDuplicateRecord,
  kUnreadableImage,
  kMissingStimulus,
  kOverlappingSplits,
  kBadCategory,
  kMalformedManifest,
};

class DatasetError : public Error {
 public:
  DatasetError(DatasetErrorKind kind, const std::string& what)
      : Error(what), kind_(kind) {}

  DatasetErrorKind kind() const noexcept { return kind_; }

 private:
  DatasetErrorKind kind_;
};

}  // namespace ssgan
