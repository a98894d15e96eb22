#pragma once

#include <stdexcept>
#include <string>

namespace essential {

// Error categories map one-to-one onto the C API status codes.
enum class ErrorKind {
  Input,     // caller passed an invalid value
  Config,    // configuration file / key problem
  Data,      // dataset does not satisfy the schedule
  Format,    // archive or file layout is malformed
  State,     // object used before it was ready
  Internal,  // invariant breach inside the library
  Training,  // numerical failure during optimisation
  Io,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace essential
