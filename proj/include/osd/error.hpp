#pragma once

#include <stdexcept>
#include <string>

namespace osd {

enum class ErrorKind {
  domain,        // argument outside its admissible range
  magnitude,     // result would overflow
  spectrum,      // spectral precondition violated (e.g. log branch)
  precondition,  // operation-specific precondition failed
  degenerate,    // singular or rank-deficient input
  horizon,       // finite data too short for the requested construction
  config,        // invalid run configuration
  io             // file read/write failure
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace osd
