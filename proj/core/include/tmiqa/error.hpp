#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tmiqa {

enum class Errc {
  // image decoding and preprocessing
  kFileNotFound,
  kUnsupportedFormat,
  kCorruptImage,
  kImageTooSmall,
  kInvalidNormalization,
  // backbone package and graph execution
  kPackageNotFound,
  kManifestMismatch,
  kUnsupportedGraphVersion,
  kInputTooSmall,
  kGraphExecutionFailure,
  // pooling and aggregation
  kEmptyFeatureMap,
  kScaleMismatch,
  kLayerMismatch,
  kWrongSegmentCount,
  // regression
  kDegenerateTarget,
  kTooManyComponents,
  kNumericalBreakdown,
  kDimensionMismatch,
  // metrics
  kLengthMismatch,
  kDegenerateInput,
  kEmptyInput,
  // dataset and experiments
  kMissingColumn,
  kMosOutOfRange,
  kDuplicatePath,
  kInvalidManifest,
  kTooFewGroups,
  kIncompleteCache,
  kInvalidConfig,
  kIoError,
  kBadFileFormat,
};

std::string_view errc_name(Errc code) noexcept;

/// Every failure raised by the library. The code identifies the condition,
/// the message carries context such as the offending path or layer name.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message);

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace tmiqa
