#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mindsets {

enum class Errc {
  UnsupportedFormat,
  CorruptHeader,
  NonFiniteData,
  NonIntegerLabels,
  DimsMismatch,
  LabelAbsent,
  EmptyRoi,
  WrongMatrixKind,
  WrongItemCount,
  UnknownPatient,
  DuplicateFragment,
  EmptyTrainSet,
  ClassAbsent,
  LengthMismatch,
  DimMismatch,
  SingleClassTrainSet,
  TooFewGroups,
  SingleClass,
  UnparseableName,
  NoVisits,
  MissingTimepoint,
  InvalidSpec,
  InvalidArgument,
  VersionMismatch,
  Io,
};

std::string_view to_string(Errc code) noexcept;

/// The single exception type thrown by the library. The code identifies the
/// failure class; the message carries the offending detail (file, column...).
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message);

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace mindsets
