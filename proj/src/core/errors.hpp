#pragma once

#include <stdexcept>
#include <string>

namespace prefopt {

// Structured error taxonomy. Every error carries a short stable code that the
// C API and CLI surface verbatim ("ERROR <code>: ...").
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& msg)
      : std::runtime_error(msg), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& msg) : Error("DIM001", msg) {}
};

struct DomainError : Error {
  explicit DomainError(const std::string& msg) : Error("DOM001", msg) {}
};

struct UsageError : Error {
  explicit UsageError(const std::string& msg) : Error("USE001", msg) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error("NUM001", msg) {}
};

struct DataError : Error {
  explicit DataError(const std::string& msg) : Error("DATA001", msg) {}
};

struct IoError : Error {
  explicit IoError(const std::string& msg) : Error("IO001", msg) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error("CFG003", msg) {}
};

struct TrainAbort : Error {
  explicit TrainAbort(const std::string& msg) : Error("TRN001", msg) {}
};

}  // namespace prefopt
