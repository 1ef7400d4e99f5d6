#include "convfield/error.hpp"

namespace convfield {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Parse: return "ParseError";
    case ErrorKind::NonManifold: return "NonManifold";
    case ErrorKind::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorKind::LowAcceptance: return "LowAcceptance";
    case ErrorKind::DegenerateHull: return "DegenerateHull";
    case ErrorKind::OracleStarvation: return "OracleStarvation";
    case ErrorKind::EmptyInterior: return "EmptyInterior";
    case ErrorKind::Indivisible: return "Indivisible";
    case ErrorKind::NonConvexInput: return "NonConvexInput";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Io: return "IoError";
    case ErrorKind::Internal: return "InternalError";
  }
  return "InternalError";
}

void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

} // namespace convfield
