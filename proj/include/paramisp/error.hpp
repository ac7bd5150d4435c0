#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace paramisp {

enum class ErrorCode {
  InvalidArgument,
  ShapeMismatch,
  Domain,
  NonFinite,
  Io,
  Format,
  Direction,
  Version,
};

const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

namespace detail {
template <class... Args>
std::string concat(Args&&... args) {
  std::ostringstream os;
  (os << ... << std::forward<Args>(args));
  return os.str();
}
}  // namespace detail

template <class... Args>
[[noreturn]] void raise(ErrorCode code, Args&&... args) {
  throw Error(code, detail::concat(std::forward<Args>(args)...));
}

}  // namespace paramisp
