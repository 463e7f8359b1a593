#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace pcg {

enum class ErrorCode {
  // structure
  EmptyCircuit,
  CyclicGraph,
  MultipleRoots,
  DanglingChild,
  InvalidStructure,
  NotPrepared,
  GridTooSmall,
  // inference
  CategoryOutOfRange,
  AllZeroEvidence,
  NumericalUnderflow,
  DimMismatch,
  // learning
  EmptyBatch,
  DatasetEmpty,
  InvalidConfig,
  // diffusion / guidance
  UntrainedDenoiser,
  DegenerateMix,
  // codec
  KTooLarge,
  // oracles
  BudgetExceeded,
  // io
  FormatError,
  IoError,
  DatasetNotFound,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyCircuit: return "EmptyCircuit";
    case ErrorCode::CyclicGraph: return "CyclicGraph";
    case ErrorCode::MultipleRoots: return "MultipleRoots";
    case ErrorCode::DanglingChild: return "DanglingChild";
    case ErrorCode::InvalidStructure: return "InvalidStructure";
    case ErrorCode::NotPrepared: return "NotPrepared";
    case ErrorCode::GridTooSmall: return "GridTooSmall";
    case ErrorCode::CategoryOutOfRange: return "CategoryOutOfRange";
    case ErrorCode::AllZeroEvidence: return "AllZeroEvidence";
    case ErrorCode::NumericalUnderflow: return "NumericalUnderflow";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::DatasetEmpty: return "DatasetEmpty";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::UntrainedDenoiser: return "UntrainedDenoiser";
    case ErrorCode::DegenerateMix: return "DegenerateMix";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::BudgetExceeded: return "BudgetExceeded";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::DatasetNotFound: return "DatasetNotFound";
  }
  return "Unknown";
}

/// Every failure raised by the library. `location()` carries the offending
/// node, variable or step index when there is one.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<std::uint64_t> location = std::nullopt)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        location_(location) {}

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::uint64_t> location() const noexcept { return location_; }

 private:
  ErrorCode code_;
  std::optional<std::uint64_t> location_;
};

}  // namespace pcg
