#pragma once

#include <stdexcept>
#include <string>

namespace rbsde {

enum class ErrorKind {
  InvalidConfig,
  Index,
  Data,
  EnvelopeUndefined,
  CertificateUnavailable,
  CertificateRefused,
  Iteration,
  HypothesisViolated,
  Resource,
  LatticeMismatch,
};

const char* to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library carries a machine-readable kind so the
/// CLI can map it onto an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace rbsde
