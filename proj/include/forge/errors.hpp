#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace forge {

/// Base class for every error raised by the pipeline.
class ForgeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed binary header or truncated payload.
class FormatError : public ForgeError {
 public:
  using ForgeError::ForgeError;
};

/// Index outside declared bounds, or a duplicated sparse entry.
class BoundsError : public ForgeError {
 public:
  using ForgeError::ForgeError;
};

/// Non-finite or otherwise invalid numeric value.
class ValueError : public ForgeError {
 public:
  using ForgeError::ForgeError;
};

/// Structured document that violates its schema.
class SchemaError : public ForgeError {
 public:
  using ForgeError::ForgeError;
};

/// Inconsistent matrix dimensions.
class ShapeError : public ForgeError {
 public:
  using ForgeError::ForgeError;
};

class ConfigError : public ForgeError {
 public:
  using ForgeError::ForgeError;
};

class NotFoundError : public ForgeError {
 public:
  using ForgeError::ForgeError;
};

/// Raised when an external client could not be reached. Retryable.
class TransportError : public ForgeError {
 public:
  using ForgeError::ForgeError;
};

/// Adjudication failed after exhausting transport retries.
class AdjudicatorError : public ForgeError {
 public:
  using ForgeError::ForgeError;
};

/// A precondition of an operation does not hold for the given input.
class PreconditionError : public ForgeError {
 public:
  using ForgeError::ForgeError;
};

class IncompleteWorkspaceError : public ForgeError {
 public:
  explicit IncompleteWorkspaceError(std::vector<std::string> missing);

  const std::vector<std::string>& missing_stages() const { return missing_; }

 private:
  std::vector<std::string> missing_;
};

}  // namespace forge
