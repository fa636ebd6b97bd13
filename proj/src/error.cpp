#include "consor/error.hpp"

namespace consor {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownInstance: return "UnknownInstance";
    case ErrorCode::UnknownReceptacle: return "UnknownReceptacle";
    case ErrorCode::IncompatibleScenes: return "IncompatibleScenes";
    case ErrorCode::VocabularyTooSmall: return "VocabularyTooSmall";
    case ErrorCode::RemovalCountOutOfRange: return "RemovalCountOutOfRange";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DuplicateToken: return "DuplicateToken";
    case ErrorCode::PositionOutOfRange: return "PositionOutOfRange";
    case ErrorCode::UnknownCategory: return "UnknownCategory";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::AxisOutOfRange: return "AxisOutOfRange";
    case ErrorCode::NotScalarLoss: return "NotScalarLoss";
    case ErrorCode::DanglingTape: return "DanglingTape";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::NoContainers: return "NoContainers";
    case ErrorCode::EmptyRecordSet: return "EmptyRecordSet";
    case ErrorCode::EmptySchemaSlice: return "EmptySchemaSlice";
    case ErrorCode::DegenerateGraph: return "DegenerateGraph";
    case ErrorCode::MissingSchemaDemo: return "MissingSchemaDemo";
    case ErrorCode::TransportError: return "TransportError";
    case ErrorCode::UnknownScene: return "UnknownScene";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ArtifactMismatch: return "ArtifactMismatch";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

}  // namespace consor
