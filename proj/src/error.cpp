#include "sdrbed/error.hpp"

namespace sdrbed {

std::string_view error_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Parse: return "ParseError";
    case ErrorKind::Validation: return "ValidationError";
    case ErrorKind::Spec: return "SpecError";
    case ErrorKind::License: return "LicenseError";
    case ErrorKind::Capacity: return "CapacityError";
    case ErrorKind::State: return "StateError";
    case ErrorKind::Conflict: return "ConflictError";
    case ErrorKind::Allocation: return "AllocationError";
    case ErrorKind::NoFit: return "NoFitError";
    case ErrorKind::Placement: return "PlacementError";
    case ErrorKind::Shift: return "ShiftError";
    case ErrorKind::Rate: return "RateError";
    case ErrorKind::Slot: return "SlotError";
    case ErrorKind::ZeroReference: return "ZeroReferenceError";
    case ErrorKind::Domain: return "DomainError";
    case ErrorKind::Scenario: return "ScenarioError";
    case ErrorKind::Sealed: return "SealedError";
    case ErrorKind::Order: return "OrderError";
    case ErrorKind::Recovery: return "RecoveryError";
    case ErrorKind::Bind: return "BindError";
    case ErrorKind::NotFound: return "NotFound";
    case ErrorKind::Forbidden: return "Forbidden";
    case ErrorKind::Unauthorized: return "Unauthorized";
    case ErrorKind::Usage: return "UsageError";
  }
  return "Error";
}

int http_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Parse:
    case ErrorKind::Validation:
    case ErrorKind::Spec:
    case ErrorKind::License:
    case ErrorKind::Shift:
    case ErrorKind::Rate:
    case ErrorKind::Slot:
    case ErrorKind::ZeroReference:
    case ErrorKind::Domain:
    case ErrorKind::Scenario:
    case ErrorKind::Usage:
      return 400;
    case ErrorKind::Unauthorized:
      return 401;
    case ErrorKind::Forbidden:
      return 403;
    case ErrorKind::NotFound:
      return 404;
    case ErrorKind::State:
    case ErrorKind::Conflict:
    case ErrorKind::Sealed:
    case ErrorKind::Order:
      return 409;
    case ErrorKind::Capacity:
    case ErrorKind::Allocation:
    case ErrorKind::NoFit:
    case ErrorKind::Placement:
      return 422;
    case ErrorKind::Recovery:
    case ErrorKind::Bind:
      return 500;
  }
  return 500;
}

}  // namespace sdrbed
