#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace consor {

enum class ErrorCode {
  UnknownInstance,
  UnknownReceptacle,
  IncompatibleScenes,
  VocabularyTooSmall,
  RemovalCountOutOfRange,
  MalformedHeader,
  DimensionMismatch,
  DuplicateToken,
  PositionOutOfRange,
  UnknownCategory,
  ShapeMismatch,
  AxisOutOfRange,
  NotScalarLoss,
  DanglingTape,
  EmptyDataset,
  NonFiniteLoss,
  NoContainers,
  EmptyRecordSet,
  EmptySchemaSlice,
  DegenerateGraph,
  MissingSchemaDemo,
  TransportError,
  UnknownScene,
  ParseError,
  IoError,
  ArtifactMismatch,
  InvalidConfig,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace consor
