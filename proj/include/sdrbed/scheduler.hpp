#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sdrbed/allocator.hpp"
#include "sdrbed/event_log.hpp"
#include "sdrbed/inventory.hpp"
#include "sdrbed/reservation.hpp"

namespace sdrbed {

using Calendar = std::map<std::string, Reservation>;

struct SchedulerConfig {
  std::int64_t auto_approve_max_s = 86400;
  double auto_approve_fraction = 0.25;
  std::int64_t tentative_ttl_s = 900;
};

enum class ConflictKind { Devices, Spectrum, Compute, Network };
std::string_view to_string(ConflictKind k);

struct Conflict {
  ConflictKind kind = ConflictKind::Devices;
  std::vector<std::string> with;  ///< conflicting reservation ids, sorted
  std::string detail;

  bool operator==(const Conflict&) const = default;
};

nlohmann::json to_json(const Conflict& c);

/// Conflicts between `candidate` and every other non-terminal reservation
/// whose window overlaps it. Device, compute and network demand are summed
/// over each elementary time segment, so k-way overlaps are caught.
std::vector<Conflict> detect_conflicts(const Reservation& candidate, const Calendar& calendar, const Inventory& inv);

/// Checks `spec` against the inventory regardless of time. Throws
/// Error(Spec), Error(License) or Error(Capacity).
void validate_request(const ResourceSpec& spec, const TimeWindow& window, const Inventory& inv);

struct UtilizationBucket {
  Timestamp start_utc = 0;
  Timestamp end_utc = 0;
  /// Occupancy fraction in [0, 1] per resource class.
  std::map<std::string, double> occupancy;
};

/// Time-weighted occupancy per bucket. Confirmed reservations hold their
/// window, Active ones hold from activation to window end, Completed ones
/// from activation to completion.
std::vector<UtilizationBucket> utilization_report(const Calendar& calendar, const Inventory& inv, Timestamp from,
                                                  Timestamp to, std::int64_t bucket_s);
nlohmann::json to_json(const std::vector<UtilizationBucket>& report);

struct AdmissionResult {
  Reservation reservation;
  std::vector<Conflict> conflicts;
};

/// Owns the reservation lifecycle and the allocator. Every mutation takes an
/// explicit `now` so that persisted logs replay deterministically. Not
/// thread-safe: the gateway funnels all mutations through one writer.
class Scheduler {
 public:
  using TransitionListener = std::function<void(const Reservation&, const AuditEntry&)>;

  explicit Scheduler(InventoryPtr inv, SchedulerConfig config = {});

  const Reservation& request(const std::string& user, const TimeWindow& window, const ResourceSpec& spec,
                             Timestamp now);
  AdmissionResult evaluate(const std::string& id, Timestamp now, const std::string& actor = "scheduler");
  const Reservation& review(const std::string& id, const std::string& admin, bool approve, Timestamp now);
  /// On AllocationError the reservation stays Confirmed with an audit note
  /// and the error propagates.
  const Reservation& activate(const std::string& id, Timestamp now, const std::string& actor = "scheduler");
  std::pair<Reservation, SurveyForm> complete(const std::string& id, Timestamp now,
                                              const std::string& actor = "scheduler");
  const Reservation& cancel(const std::string& id, Timestamp now, const std::string& actor);
  const Reservation& submit_survey(const std::string& id, const std::vector<std::string>& responses, Timestamp now,
                                   const std::string& actor);
  /// Cancels Tentative holds older than the TTL. Returns the expired ids.
  std::vector<std::string> expire_tentative(Timestamp now);
  /// Throws Error(State) while allocations are live.
  void reload_inventory(InventoryPtr inv, Timestamp now, const std::string& actor);

  const Calendar& calendar() const { return calendar_; }
  const Reservation& get(const std::string& id) const;
  const std::map<std::string, UsageEntry>& ledger() const { return ledger_; }
  const std::vector<SurveyForm>& surveys() const { return surveys_; }
  const Allocator& allocator() const { return allocator_; }
  const Inventory& inventory() const { return *inv_; }
  InventoryPtr inventory_ptr() const { return inv_; }
  const SchedulerConfig& config() const { return config_; }
  std::uint64_t last_seq() const { return last_seq_; }

  void set_listener(TransitionListener listener) { listener_ = std::move(listener); }

  /// Appends every successful mutation to `log` from now on.
  void attach_log(EventLog* log) { log_ = log; }
  /// Re-applies persisted records in order. Throws Error(Recovery) when a
  /// record cannot be applied or its logged outcome diverges.
  void replay(const std::vector<LogRecord>& records);

  /// Derived state document; byte-identical for identical histories.
  nlohmann::json snapshot() const;

 private:
  Reservation& lookup(const std::string& id);
  void transition(Reservation& r, ReservationState to, Timestamp now, const std::string& actor,
                  const std::string& note = {});
  void annotate(Reservation& r, Timestamp now, const std::string& actor, const std::string& note);
  void record(const std::string& op, Timestamp now, const std::string& actor, nlohmann::json args,
              nlohmann::json result);
  void sweep(Timestamp now);
  void apply(const LogRecord& rec);

  InventoryPtr inv_;
  SchedulerConfig config_;
  Allocator allocator_;
  Calendar calendar_;
  std::map<std::string, UsageEntry> ledger_;
  std::vector<SurveyForm> surveys_;
  std::uint64_t next_id_ = 1;
  std::uint64_t last_seq_ = 0;
  EventLog* log_ = nullptr;
  bool replaying_ = false;
  TransitionListener listener_;
};

}  // namespace sdrbed
