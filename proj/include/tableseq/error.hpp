// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tableseq {

enum class ErrorCode {
  // table-core
  kNonRectangular,
  kMalformedMarkup,
  kBadCoordMarker,
  kMissingBox,
  kIndexOutOfRange,
  // tokenize
  kNegativeCoord,
  kTextNotEncodable,
  kUnrecoverable,
  kUnknownToken,
  // targets / metrics
  kMissingBoxes,
  kMissingImageSize,
  // numerics
  kNonFiniteInput,
  kShapeMismatch,
  kWeightsNotNormalized,
  kNonFiniteLoss,
  // imgproc / io
  kStatDegenerate,
  kUnusable,
  kIo,
  kFormat,
  // cli
  kConfigInvalid,
  kPathMissing,
};

std::string_view error_name(ErrorCode code);

/// Exception type used throughout the library. The code identifies the
/// failure class; the CLI maps classes onto process exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace tableseq
