#include "mindsets/error.hpp"

namespace mindsets {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::UnsupportedFormat: return "UnsupportedFormat";
    case Errc::CorruptHeader: return "CorruptHeader";
    case Errc::NonFiniteData: return "NonFiniteData";
    case Errc::NonIntegerLabels: return "NonIntegerLabels";
    case Errc::DimsMismatch: return "DimsMismatch";
    case Errc::LabelAbsent: return "LabelAbsent";
    case Errc::EmptyRoi: return "EmptyRoi";
    case Errc::WrongMatrixKind: return "WrongMatrixKind";
    case Errc::WrongItemCount: return "WrongItemCount";
    case Errc::UnknownPatient: return "UnknownPatient";
    case Errc::DuplicateFragment: return "DuplicateFragment";
    case Errc::EmptyTrainSet: return "EmptyTrainSet";
    case Errc::ClassAbsent: return "ClassAbsent";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::DimMismatch: return "DimMismatch";
    case Errc::SingleClassTrainSet: return "SingleClassTrainSet";
    case Errc::TooFewGroups: return "TooFewGroups";
    case Errc::SingleClass: return "SingleClass";
    case Errc::UnparseableName: return "UnparseableName";
    case Errc::NoVisits: return "NoVisits";
    case Errc::MissingTimepoint: return "MissingTimepoint";
    case Errc::InvalidSpec: return "InvalidSpec";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::VersionMismatch: return "VersionMismatch";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace mindsets
