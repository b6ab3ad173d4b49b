#pragma once

#include <stdexcept>
#include <string>

namespace mmsets {

enum class ErrorKind {
  dimension,   // shape disagreement between operands
  empty_set,   // pooling or set construction with zero elements
  parameter,   // argument outside its admissible range
  contract,    // caller violated an operation precondition
  validation,  // malformed dataset, manifest or config record
  numeric,     // non-finite loss or gradient
  io,          // file could not be read or written
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::dimension: return "dimension error";
    case ErrorKind::empty_set: return "empty-set error";
    case ErrorKind::parameter: return "parameter error";
    case ErrorKind::contract: return "contract error";
    case ErrorKind::validation: return "validation error";
    case ErrorKind::numeric: return "numeric error";
    case ErrorKind::io: return "I/O error";
  }
  return "error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace mmsets
