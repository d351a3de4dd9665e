#include "tmiqa/error.hpp"

namespace tmiqa {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::kFileNotFound: return "FileNotFound";
    case Errc::kUnsupportedFormat: return "UnsupportedFormat";
    case Errc::kCorruptImage: return "CorruptImage";
    case Errc::kImageTooSmall: return "ImageTooSmall";
    case Errc::kInvalidNormalization: return "InvalidNormalization";
    case Errc::kPackageNotFound: return "PackageNotFound";
    case Errc::kManifestMismatch: return "ManifestMismatch";
    case Errc::kUnsupportedGraphVersion: return "UnsupportedGraphVersion";
    case Errc::kInputTooSmall: return "InputTooSmall";
    case Errc::kGraphExecutionFailure: return "GraphExecutionFailure";
    case Errc::kEmptyFeatureMap: return "EmptyFeatureMap";
    case Errc::kScaleMismatch: return "ScaleMismatch";
    case Errc::kLayerMismatch: return "LayerMismatch";
    case Errc::kWrongSegmentCount: return "WrongSegmentCount";
    case Errc::kDegenerateTarget: return "DegenerateTarget";
    case Errc::kTooManyComponents: return "TooManyComponents";
    case Errc::kNumericalBreakdown: return "NumericalBreakdown";
    case Errc::kDimensionMismatch: return "DimensionMismatch";
    case Errc::kLengthMismatch: return "LengthMismatch";
    case Errc::kDegenerateInput: return "DegenerateInput";
    case Errc::kEmptyInput: return "EmptyInput";
    case Errc::kMissingColumn: return "MissingColumn";
    case Errc::kMosOutOfRange: return "MosOutOfRange";
    case Errc::kDuplicatePath: return "DuplicatePath";
    case Errc::kInvalidManifest: return "InvalidManifest";
    case Errc::kTooFewGroups: return "TooFewGroups";
    case Errc::kIncompleteCache: return "IncompleteCache";
    case Errc::kInvalidConfig: return "InvalidConfig";
    case Errc::kIoError: return "IoError";
    case Errc::kBadFileFormat: return "BadFileFormat";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& message)
    : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

}  // namespace tmiqa
