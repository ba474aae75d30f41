#include "ckan/error.hpp"

namespace ckan {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::InvalidDomain: return "invalid-domain";
    case ErrorCode::ZeroIntervals: return "zero-intervals";
    case ErrorCode::NonFinite: return "non-finite";
    case ErrorCode::WidthMismatch: return "width-mismatch";
    case ErrorCode::LengthMismatch: return "length-mismatch";
    case ErrorCode::EmptyDataset: return "empty-dataset";
    case ErrorCode::Diverged: return "diverged";
    case ErrorCode::Internal: return "internal";
    case ErrorCode::Io: return "io";
    case ErrorCode::Schema: return "schema";
    case ErrorCode::UnknownExperiment: return "unknown-experiment";
  }
  return "unknown";
}

}  // namespace ckan
