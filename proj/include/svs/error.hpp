#pragma once

#include <stdexcept>
#include <string>

namespace svs {

// Base error for every contract violation raised by the library. The `kind`
// string is stable and is what the CLI emits in machine-readable records.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

inline void require(bool cond, const char* kind, const std::string& msg) {
  if (!cond) throw Error(kind, msg);
}

}  // namespace svs
