// SPDX-License-Identifier: Apache-2.0
#include "tableseq/error.hpp"

namespace tableseq {

std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNonRectangular: return "NonRectangular";
    case ErrorCode::kMalformedMarkup: return "MalformedMarkup";
    case ErrorCode::kBadCoordMarker: return "BadCoordMarker";
    case ErrorCode::kMissingBox: return "MissingBox";
    case ErrorCode::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::kNegativeCoord: return "NegativeCoord";
    case ErrorCode::kTextNotEncodable: return "TextNotEncodable";
    case ErrorCode::kUnrecoverable: return "Unrecoverable";
    case ErrorCode::kUnknownToken: return "UnknownToken";
    case ErrorCode::kMissingBoxes: return "MissingBoxes";
    case ErrorCode::kMissingImageSize: return "MissingImageSize";
    case ErrorCode::kNonFiniteInput: return "NonFiniteInput";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kWeightsNotNormalized: return "WeightsNotNormalized";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kStatDegenerate: return "StatDegenerate";
    case ErrorCode::kUnusable: return "Unusable";
    case ErrorCode::kIo: return "IoError";
    case ErrorCode::kFormat: return "FormatError";
    case ErrorCode::kConfigInvalid: return "ConfigInvalid";
    case ErrorCode::kPathMissing: return "PathMissing";
  }
  return "Error";
}

}  // namespace tableseq
