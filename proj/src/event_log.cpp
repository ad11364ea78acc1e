#include "sdrbed/event_log.hpp"

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fcntl.h>
#include <unistd.h>

#include "sdrbed/error.hpp"

namespace sdrbed {

using nlohmann::json;

json to_json(const LogRecord& r) {
  return {{"seq", r.seq}, {"t_utc", r.t_utc}, {"actor", r.actor}, {"op", r.op}, {"args", r.args}, {"result", r.result}};
}

LogRecord log_record_from_json(const json& j) {
  LogRecord r;
  r.seq = j.at("seq").get<std::uint64_t>();
  r.t_utc = j.at("t_utc").get<std::int64_t>();
  r.actor = j.at("actor").get<std::string>();
  r.op = j.at("op").get<std::string>();
  r.args = j.at("args");
  r.result = j.at("result");
  return r;
}

EventLog::EventLog(std::string path, bool sync) : path_(std::move(path)), sync_(sync) {
  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd_ < 0) throw Error(ErrorKind::Recovery, "cannot open event log " + path_ + ": " + std::strerror(errno));
}

EventLog::~EventLog() {
  if (fd_ >= 0) ::close(fd_);
}

void EventLog::append(const LogRecord& record) {
  const std::string line = to_json(record).dump() + "\n";
  std::size_t off = 0;
  while (off < line.size()) {
    ssize_t n = ::write(fd_, line.data() + off, line.size() - off);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw Error(ErrorKind::Recovery, "event log write failed: " + std::string(std::strerror(errno)));
    off += static_cast<std::size_t>(n);
  }
  if (sync_) ::fdatasync(fd_);
}

std::vector<LogRecord> EventLog::read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::vector<LogRecord> out;
  if (!in) return out;
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string data = ss.str();
  std::size_t pos = 0;
  while (pos < data.size()) {
    const std::size_t nl = data.find('\n', pos);
    if (nl == std::string::npos)
      throw Error(ErrorKind::Recovery, "event log " + path + ": truncated record at offset " + std::to_string(pos));
    try {
      auto rec = log_record_from_json(json::parse(data.substr(pos, nl - pos)));
      if (rec.seq != out.size() + 1) {
        throw Error(ErrorKind::Recovery, "event log " + path + ": sequence gap at offset " + std::to_string(pos));
      }
      out.push_back(std::move(rec));
    } catch (const json::exception&) {
      throw Error(ErrorKind::Recovery, "event log " + path + ": corrupt record at offset " + std::to_string(pos));
    }
    pos = nl + 1;
  }
  return out;
}

}  // namespace sdrbed
