#pragma once

#include <stdexcept>
#include <string>

namespace probsal {

// Mirrors the status codes exported by the C API (probsal.h).
enum class ErrorCode : int {
  InvalidArgument = 1,
  Io = 2,
  Format = 3,
  Numeric = 4,
  NotFound = 5,
  Internal = 6,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

struct InvalidArgument : Error {
  explicit InvalidArgument(const std::string& w) : Error(ErrorCode::InvalidArgument, w) {}
};
struct IoError : Error {
  explicit IoError(const std::string& w) : Error(ErrorCode::Io, w) {}
};
struct FormatError : Error {
  explicit FormatError(const std::string& w) : Error(ErrorCode::Format, w) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& w) : Error(ErrorCode::Numeric, w) {}
};
struct NotFoundError : Error {
  explicit NotFoundError(const std::string& w) : Error(ErrorCode::NotFound, w) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw InvalidArgument(msg);
}

}  // namespace probsal
