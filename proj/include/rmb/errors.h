#pragma once

#include <stdexcept>
#include <string>

namespace rmb {

// Base of every failure raised by the library. kind() names the specific
// error type.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message);
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define RMB_DECLARE_ERROR(Name, tag)                                  \
  class Name : public Error {                                         \
   public:                                                            \
    explicit Name(const std::string& message) : Error(tag, message) {} \
  };

RMB_DECLARE_ERROR(ContractViolation, "contract violation")
RMB_DECLARE_ERROR(ConfigError, "configuration error")
RMB_DECLARE_ERROR(DomainError, "domain error")
RMB_DECLARE_ERROR(EmptyHistoryError, "empty history")
RMB_DECLARE_ERROR(EmptyBatchError, "empty batch")
RMB_DECLARE_ERROR(NumericalError, "numerical error")
RMB_DECLARE_ERROR(StateError, "state error")
RMB_DECLARE_ERROR(LoadError, "load error")
RMB_DECLARE_ERROR(ParseError, "parse error")
RMB_DECLARE_ERROR(ReportError, "report error")

#undef RMB_DECLARE_ERROR

// Throws ContractViolation with `message` unless `condition` holds.
inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

}  // namespace rmb
