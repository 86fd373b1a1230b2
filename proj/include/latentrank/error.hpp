// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace latentrank {

enum class ErrorCode {
  Config,      // invalid OptimizerConfig or other configuration
  Feedback,    // malformed ranking (duplicates, out of range, wrong length)
  Protocol,    // feedback kind not legal in the current stage
  Lookup,      // unknown id, empty store
  Domain,      // dimension mismatch, zero norm, non-finite input
  Degenerate,  // empty comparison graph
  Io,
  Parse,
  Replay,      // transcript does not reproduce
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace latentrank
