#pragma once

#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sdrbed/chanem.hpp"
#include "sdrbed/inventory.hpp"
#include "sdrbed/reservation.hpp"

namespace sdrbed {

struct ExperimentRecord {
  double t_utc = 0.0;
  std::string node_id;
  std::optional<Position> xyz_m;
  std::string label;  ///< floorplan label; may be empty when xyz_m is set
  double freq_hz = 0.0;
  double azimuth_deg = 0.0;
  double value_dbm = 0.0;

  bool operator==(const ExperimentRecord&) const = default;
};

/// Throws Error(Validation) naming the offending field.
void validate(const ExperimentRecord& r);

nlohmann::json to_json(const ExperimentRecord& r);
ExperimentRecord experiment_record_from_json(const nlohmann::json& j);

struct ConfigSnapshot {
  std::string inventory_hash;
  std::string reservation_id;
  std::string scenario_hash;  ///< empty when no scenario was in effect
  std::vector<std::string> software;
  std::vector<std::string> sample_formats;
  Timestamp created_utc = 0;

  bool operator==(const ConfigSnapshot&) const = default;
};

nlohmann::json to_json(const ConfigSnapshot& s);
ConfigSnapshot config_snapshot_from_json(const nlohmann::json& j);

/// Snapshot of the configuration a reservation runs under.
ConfigSnapshot make_config_snapshot(const Inventory& inv, const Reservation& r, const ChannelScenario* scenario,
                                    std::vector<std::string> sample_formats, Timestamp now);

/// Every supplied bound is inclusive.
struct RecordFilter {
  std::optional<std::pair<double, double>> t_utc;
  std::optional<std::string> node_id;
  std::optional<std::pair<double, double>> freq_hz;
  std::optional<std::pair<double, double>> azimuth_deg;

  bool matches(const ExperimentRecord& r) const;
};

struct ArchiveInfo {
  std::string experiment_id;
  ConfigSnapshot snapshot;
  std::size_t record_count = 0;
  bool sealed = false;
  std::string digest;  ///< set once sealed
};

nlohmann::json to_json(const ArchiveInfo& a);

// On-disk layout, one directory per experiment under the store root:
//
//   <root>/<experiment_id>/snapshot.json   {"experiment_id", "snapshot": {...}}
//   <root>/<experiment_id>/records.log     one record per line
//   <root>/<experiment_id>/seal.json       {"digest": "<hex>"}, present once sealed
//
// A record line is nine tab-separated fields terminated by '\n':
//
//   t_utc  node_id  x  y  z  label  freq_hz  azimuth_deg  value_dbm
//
// Numbers are printed with "%.17g" so they parse back to the same double.
// x, y and z are all empty when the record has no coordinates. node_id and
// label may not contain tabs or newlines.
//
// The seal digest is SHA-256 (lowercase hex) over the compact JSON dump of
// the ConfigSnapshot, one '\n', then the exact bytes of records.log.
class ExperimentStore {
 public:
  /// Loads every archive under `root`. A final line without '\n' (a torn
  /// append) is discarded; any other malformed line throws Error(Recovery).
  explicit ExperimentStore(std::string root, bool sync = true);
  ~ExperimentStore();
  ExperimentStore(const ExperimentStore&) = delete;
  ExperimentStore& operator=(const ExperimentStore&) = delete;

  /// Throws Error(State) unless `r` is Active.
  ArchiveInfo open_experiment(const Reservation& r, ConfigSnapshot snapshot);
  /// Throws Error(Sealed), Error(Order) or Error(Validation). The record is
  /// on disk before this returns.
  void append(const std::string& experiment_id, const ExperimentRecord& record);
  /// All-or-nothing: every record is checked before any is written.
  void append_batch(const std::string& experiment_id, const std::vector<ExperimentRecord>& records);
  /// Matches ordered by t_utc, then node_id, then append order.
  std::vector<ExperimentRecord> query(const std::string& experiment_id, const RecordFilter& filter) const;
  /// Throws Error(Sealed) when already sealed.
  std::string seal(const std::string& experiment_id);

  ArchiveInfo info(const std::string& experiment_id) const;
  std::vector<ArchiveInfo> list() const;
  const std::string& root() const { return root_; }

 private:
  struct Archive;
  Archive& find(const std::string& id) const;
  void write_records(Archive& a, const std::vector<ExperimentRecord>& records);

  std::string root_;
  bool sync_;
  std::uint64_t next_id_ = 1;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::unique_ptr<Archive>> archives_;
};

/// Record line codec, exposed for tests.
std::string format_record_line(const ExperimentRecord& r);
ExperimentRecord parse_record_line(const std::string& line);

}  // namespace sdrbed
