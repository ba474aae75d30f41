#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ckan {

enum class ErrorCode {
  InvalidArgument,
  InvalidDomain,
  ZeroIntervals,
  NonFinite,
  WidthMismatch,
  LengthMismatch,
  EmptyDataset,
  Diverged,
  Internal,
  Io,
  Schema,
  UnknownExperiment,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Training produced a non-finite loss. `epoch` is the step at which the
/// loss was observed; `member` is set when raised from ensemble training.
class DivergedError : public Error {
 public:
  DivergedError(std::size_t epoch, const std::string& what, long member = -1)
      : Error(ErrorCode::Diverged, what), epoch_(epoch), member_(member) {}

  std::size_t epoch() const noexcept { return epoch_; }
  long member() const noexcept { return member_; }

 private:
  std::size_t epoch_;
  long member_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) throw Error(code, what);
}

}  // namespace ckan
