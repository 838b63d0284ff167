#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hit {

enum class Errc {
  // configuration / usage
  ConfigError,
  InvalidArgument,
  // data
  SlideSmallerThanPatch,
  MissingPatch,
  ShapeMismatch,
  BadPatchSize,
  ExternalModelUnavailable,
  EmptyImage,
  UnknownEncoderTag,
  UnknownCase,
  UnlabeledSlide,
  EmptySplit,
  DegenerateBatch,
  DimMismatch,
  KTooLarge,
  EmptyTrainingSet,
  AllPaddedBag,
  SingleClassTrainingSet,
  InsufficientGroups,
  UnstratifiableLabels,
  SingleClass,
  MissingHead,
  MissingLabel,
  MissingScore,
  PlacementFailure,
  IoError,
  FormatError,
  // numerics
  NumericFailure,
};

std::string_view errc_name(Errc code) noexcept;

/// Process exit code for a failure class: 2 config, 3 data, 4 numeric.
int exit_code_for(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, Errc code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace hit
