#pragma once

#include <stdexcept>
#include <string>

namespace geonet {

/// Broad failure category. The CLI maps these onto process exit codes.
enum class ErrorKind {
  Validation = 1,  // bad input, violated precondition
  Runtime = 2,     // divergence, resource caps
  Io = 3,          // files missing, truncated, unreadable
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& what) : Error(ErrorKind::Validation, what) {}
};

struct RuntimeError : Error {
  explicit RuntimeError(const std::string& what) : Error(ErrorKind::Runtime, what) {}
};

/// Raised when an instance exceeds a configured size cap.
struct ResourceError : Error {
  explicit ResourceError(const std::string& what) : Error(ErrorKind::Runtime, what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

namespace detail {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

}  // namespace detail
}  // namespace geonet
