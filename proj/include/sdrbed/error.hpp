#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace sdrbed {

/// Domain error taxonomy shared by every module. The gateway maps each kind
/// onto an HTTP status and the CLI prints the kind name on failure.
enum class ErrorKind {
  Parse,
  Validation,
  Spec,
  License,
  Capacity,
  State,
  Conflict,
  Allocation,
  NoFit,
  Placement,
  Shift,
  Rate,
  Slot,
  ZeroReference,
  Domain,
  Scenario,
  Sealed,
  Order,
  Recovery,
  Bind,
  NotFound,
  Forbidden,
  Unauthorized,
  Usage,
};

std::string_view error_name(ErrorKind kind);
int http_status(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message, std::string field = {})
      : std::runtime_error(message), kind_(kind), field_(std::move(field)) {}

  ErrorKind kind() const noexcept { return kind_; }
  std::string_view name() const { return error_name(kind_); }
  /// Offending field or resource class, empty when not applicable.
  const std::string& field() const noexcept { return field_; }

 private:
  ErrorKind kind_;
  std::string field_;
};

}  // namespace sdrbed
