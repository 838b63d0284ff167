#include "hit/error.hpp"

namespace hit {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::ConfigError: return "ConfigError";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::SlideSmallerThanPatch: return "SlideSmallerThanPatch";
    case Errc::MissingPatch: return "MissingPatch";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::BadPatchSize: return "BadPatchSize";
    case Errc::ExternalModelUnavailable: return "ExternalModelUnavailable";
    case Errc::EmptyImage: return "EmptyImage";
    case Errc::UnknownEncoderTag: return "UnknownEncoderTag";
    case Errc::UnknownCase: return "UnknownCase";
    case Errc::UnlabeledSlide: return "UnlabeledSlide";
    case Errc::EmptySplit: return "EmptySplit";
    case Errc::DegenerateBatch: return "DegenerateBatch";
    case Errc::DimMismatch: return "DimMismatch";
    case Errc::KTooLarge: return "KTooLarge";
    case Errc::EmptyTrainingSet: return "EmptyTrainingSet";
    case Errc::AllPaddedBag: return "AllPaddedBag";
    case Errc::SingleClassTrainingSet: return "SingleClassTrainingSet";
    case Errc::InsufficientGroups: return "InsufficientGroups";
    case Errc::UnstratifiableLabels: return "UnstratifiableLabels";
    case Errc::SingleClass: return "SingleClass";
    case Errc::MissingHead: return "MissingHead";
    case Errc::MissingLabel: return "MissingLabel";
    case Errc::MissingScore: return "MissingScore";
    case Errc::PlacementFailure: return "PlacementFailure";
    case Errc::IoError: return "IoError";
    case Errc::FormatError: return "FormatError";
    case Errc::NumericFailure: return "NumericFailure";
  }
  return "Unknown";
}

int exit_code_for(Errc code) noexcept {
  switch (code) {
    case Errc::ConfigError:
    case Errc::InvalidArgument:
      return 2;
    case Errc::NumericFailure:
      return 4;
    default:
      return 3;
  }
}

}  // namespace hit
