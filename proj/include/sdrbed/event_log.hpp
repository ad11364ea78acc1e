#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace sdrbed {

/// One persisted scheduler mutation. On disk each record is a single line
/// of compact JSON with keys seq, t_utc, actor, op, args, result, followed
/// by '\n'. `seq` starts at 1 and increases by one per record.
struct LogRecord {
  std::uint64_t seq = 0;
  std::int64_t t_utc = 0;
  std::string actor;
  std::string op;
  nlohmann::json args;
  nlohmann::json result;

  bool operator==(const LogRecord&) const = default;
};

nlohmann::json to_json(const LogRecord& r);
LogRecord log_record_from_json(const nlohmann::json& j);

/// Append-only JSON-lines log. A record is acknowledged once its line is
/// written and (when `sync` is on) fdatasync'ed.
class EventLog {
 public:
  explicit EventLog(std::string path, bool sync = true);
  ~EventLog();
  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;

  void append(const LogRecord& record);
  const std::string& path() const { return path_; }

  /// Reads every record. Throws Error(Recovery) naming the byte offset of
  /// the first line that is truncated, unparsable or out of sequence.
  static std::vector<LogRecord> read_all(const std::string& path);

 private:
  std::string path_;
  bool sync_;
  int fd_ = -1;
};

}  // namespace sdrbed
