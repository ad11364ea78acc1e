#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sdrbed/inventory.hpp"

namespace sdrbed {

/// UTC seconds since the Unix epoch; the scheduler works at 1 s resolution.
using Timestamp = std::int64_t;

Timestamp parse_utc(std::string_view text);
std::string format_utc(Timestamp t);

/// Half-open interval [start_utc, end_utc).
struct TimeWindow {
  Timestamp start_utc = 0;
  Timestamp end_utc = 0;

  std::int64_t duration() const { return end_utc - start_utc; }
  bool overlaps(const TimeWindow& o) const { return start_utc < o.end_utc && o.start_utc < end_utc; }
  bool contains(Timestamp t) const { return t >= start_utc && t < end_utc; }

  bool operator==(const TimeWindow&) const = default;
};

struct Channel {
  double center_hz = 0.0;
  double bw_hz = 0.0;

  double low_hz() const { return center_hz - bw_hz / 2; }
  double high_hz() const { return center_hz + bw_hz / 2; }
  bool overlaps(const Channel& o) const { return low_hz() < o.high_hz() && o.low_hz() < high_hz(); }

  bool operator==(const Channel&) const = default;
};

struct ComputeRequest {
  double ram_gb = 0.0;
  double storage_gb = 0.0;
  std::int64_t vm_lifetime_s = 0;
  int cpu_threads = 0;
  int cpu_cores = 0;
  std::vector<std::string> software;

  bool empty() const { return ram_gb <= 0 && storage_gb <= 0 && cpu_cores <= 0; }
  bool operator==(const ComputeRequest&) const = default;
};

struct RadioRequest {
  int n_usrps = 0;
  std::vector<Channel> channels;
  RadioPath path = RadioPath::OverTheAir;

  bool operator==(const RadioRequest&) const = default;
};

struct NetworkRequest {
  double requested_bps = 0.0;

  bool operator==(const NetworkRequest&) const = default;
};

/// Everything a user can ask for: compute, radio and network resources.
struct ResourceSpec {
  ComputeRequest compute;
  RadioRequest radio;
  NetworkRequest network;

  bool operator==(const ResourceSpec&) const = default;
};

enum class ReservationState { Requested, Tentative, PendingReview, Confirmed, Denied, Active, Completed, Cancelled };

std::string_view to_string(ReservationState s);
ReservationState reservation_state_from_string(std::string_view text);
bool is_terminal(ReservationState s);
/// True iff `from -> to` is an edge of the reservation lifecycle.
bool transition_allowed(ReservationState from, ReservationState to);

struct AuditEntry {
  Timestamp t_utc = 0;
  ReservationState from = ReservationState::Requested;
  ReservationState to = ReservationState::Requested;
  std::string actor;
  std::string note;

  bool operator==(const AuditEntry&) const = default;
};

struct SurveyForm {
  std::string reservation_id;
  std::vector<std::string> questions;
  std::optional<std::vector<std::string>> responses;

  bool operator==(const SurveyForm&) const = default;
};

/// The fixed post-usage questionnaire.
SurveyForm make_survey(const std::string& reservation_id);

struct Reservation {
  std::string id;
  std::string user;
  TimeWindow window;
  ResourceSpec spec;
  ReservationState state = ReservationState::Requested;
  std::optional<SurveyForm> survey;
  std::vector<AuditEntry> audit;
  std::optional<Timestamp> activated_at;
  std::optional<Timestamp> completed_at;

  bool operator==(const Reservation&) const = default;
};

struct UsageEntry {
  std::int64_t scheduled_seconds = 0;
  std::int64_t actual_seconds = 0;
  std::string resources_held;

  bool operator==(const UsageEntry&) const = default;
};

nlohmann::json to_json(const ResourceSpec& spec);
ResourceSpec resource_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Reservation& r);
Reservation reservation_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SurveyForm& s);
SurveyForm survey_from_json(const nlohmann::json& j);
nlohmann::json to_json(const UsageEntry& u);
UsageEntry usage_from_json(const nlohmann::json& j);

}  // namespace sdrbed
