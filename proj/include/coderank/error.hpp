#pragma once

#include <stdexcept>
#include <string>

namespace coderank {

enum class ErrorKind {
  // usage / configuration
  ConfigError,
  InvalidPolicy,
  // data validation
  MalformedRecord,
  UnknownLabel,
  DuplicateId,
  InvalidSpec,
  EmptyTrainingSet,
  EmptyLabelSet,
  EmptyDescriptor,
  EmptyInput,
  EmptyVocab,
  MismatchedIds,
  MissingIndex,
  FingerprintMismatch,
  IoError,
  NoValidLabels,
  // runtime / numeric
  IndexOutOfRange,
  ShapeMismatch,
  NonFiniteActivation,
  NonFiniteLoss,
  NoForwardState,
  ZeroVector,
  EmptyPositives,
  DegenerateBatch,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// Process exit codes: 0 success, 1 usage/config, 2 data validation,
// 3 runtime/numeric.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ConfigError:
    case ErrorKind::InvalidPolicy:
      return 1;
    case ErrorKind::MalformedRecord:
    case ErrorKind::UnknownLabel:
    case ErrorKind::DuplicateId:
    case ErrorKind::InvalidSpec:
    case ErrorKind::EmptyTrainingSet:
    case ErrorKind::EmptyLabelSet:
    case ErrorKind::EmptyDescriptor:
    case ErrorKind::EmptyInput:
    case ErrorKind::EmptyVocab:
    case ErrorKind::MismatchedIds:
    case ErrorKind::MissingIndex:
    case ErrorKind::FingerprintMismatch:
    case ErrorKind::IoError:
    case ErrorKind::NoValidLabels:
      return 2;
    default:
      return 3;
  }
}

inline const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::InvalidPolicy: return "InvalidPolicy";
    case ErrorKind::MalformedRecord: return "MalformedRecord";
    case ErrorKind::UnknownLabel: return "UnknownLabel";
    case ErrorKind::DuplicateId: return "DuplicateId";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::EmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorKind::EmptyLabelSet: return "EmptyLabelSet";
    case ErrorKind::EmptyDescriptor: return "EmptyDescriptor";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::EmptyVocab: return "EmptyVocab";
    case ErrorKind::MismatchedIds: return "MismatchedIds";
    case ErrorKind::MissingIndex: return "MissingIndex";
    case ErrorKind::FingerprintMismatch: return "FingerprintMismatch";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::NoValidLabels: return "NoValidLabels";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonFiniteActivation: return "NonFiniteActivation";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::NoForwardState: return "NoForwardState";
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::EmptyPositives: return "EmptyPositives";
    case ErrorKind::DegenerateBatch: return "DegenerateBatch";
  }
  return "Unknown";
}

}  // namespace coderank
