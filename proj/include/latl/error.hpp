#pragma once

#include <stdexcept>
#include <string>

namespace latl {

// Library-wide error type. The CLI prints these as "error: <what>".
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

[[noreturn]] inline void fail(const std::string& what) { throw Error(what); }

}  // namespace latl
