#pragma once

#include <stdexcept>
#include <string>

namespace curlcl {

// Numeric values match the curlcl_status codes exposed by the C API.
enum class ErrorCode : int {
  shape = 1,
  argument = 2,
  index = 3,
  numeric = 4,
  parse = 5,
  state = 6,
  io = 7,
  config = 8,
  capacity = 9,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace curlcl
