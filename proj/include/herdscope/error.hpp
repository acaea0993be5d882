#pragma once

#include <stdexcept>
#include <string>

namespace herdscope {

// Mirrors hs_status in herdscope.h; values are part of the C ABI.
enum class ErrorCode {
  kInvalidArgument = 1,
  kConfig = 2,
  kData = 3,
  kStageFailure = 4,
  kIo = 5,
  kAdapter = 6,
  kNumeric = 7,
  kInternal = 8,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace herdscope
