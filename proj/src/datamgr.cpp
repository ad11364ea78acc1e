#include "sdrbed/datamgr.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <mutex>
#include <sstream>

#include "json_util.hpp"
#include "sdrbed/allocator.hpp"
#include "sdrbed/digest.hpp"
#include "sdrbed/error.hpp"

namespace sdrbed {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

bool has_separator(const std::string& s) { return s.find_first_of("\t\n\r") != std::string::npos; }

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const char* field) {
  if (s.empty()) throw Error(ErrorKind::Parse, std::string("empty ") + field + " field");
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) throw Error(ErrorKind::Parse, std::string("bad ") + field + " field '" + s + "'");
  return v;
}

bool record_less(const ExperimentRecord& a, const ExperimentRecord& b) {
  if (a.t_utc != b.t_utc) return a.t_utc < b.t_utc;
  return a.node_id < b.node_id;
}

void write_all(int fd, const std::string& bytes, const std::string& path) {
  std::size_t done = 0;
  while (done < bytes.size()) {
    const ssize_t n = ::write(fd, bytes.data() + done, bytes.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorKind::Validation, "write to " + path + " failed: " + std::strerror(errno));
    }
    done += static_cast<std::size_t>(n);
  }
}

}  // namespace

void validate(const ExperimentRecord& r) {
  if (!std::isfinite(r.t_utc)) throw Error(ErrorKind::Validation, "t_utc must be finite", "t_utc");
  if (r.node_id.empty() || has_separator(r.node_id))
    throw Error(ErrorKind::Validation, "node_id must be non-empty without tabs or newlines", "node_id");
  if (has_separator(r.label)) throw Error(ErrorKind::Validation, "label may not contain tabs or newlines", "label");
  if (!r.xyz_m && r.label.empty())
    throw Error(ErrorKind::Validation, "location needs coordinates or a floorplan label", "location");
  if (r.xyz_m)
    for (double c : *r.xyz_m)
      if (!std::isfinite(c)) throw Error(ErrorKind::Validation, "coordinates must be finite", "location");
  if (!(r.freq_hz > 0) || !std::isfinite(r.freq_hz))
    throw Error(ErrorKind::Validation, "freq_hz must be > 0", "freq_hz");
  if (!(r.azimuth_deg >= 0.0 && r.azimuth_deg < 360.0))
    throw Error(ErrorKind::Validation, "azimuth_deg must lie in [0, 360)", "azimuth_deg");
  if (!std::isfinite(r.value_dbm)) throw Error(ErrorKind::Validation, "value_dbm must be finite", "value_dbm");
}

json to_json(const ExperimentRecord& r) {
  json loc = json::object();
  if (r.xyz_m) loc["xyz_m"] = *r.xyz_m;
  if (!r.label.empty()) loc["label"] = r.label;
  return {{"t_utc", r.t_utc},     {"node_id", r.node_id},         {"location", loc},
          {"freq_hz", r.freq_hz}, {"azimuth_deg", r.azimuth_deg}, {"value_dbm", r.value_dbm}};
}

ExperimentRecord experiment_record_from_json(const json& j) {
  const std::string path = "record";
  ExperimentRecord r;
  r.t_utc = detail::get_required<double>(j, "t_utc", path);
  r.node_id = detail::get_required<std::string>(j, "node_id", path);
  r.freq_hz = detail::get_required<double>(j, "freq_hz", path);
  r.azimuth_deg = detail::get_or<double>(j, "azimuth_deg", 0.0, path);
  r.value_dbm = detail::get_required<double>(j, "value_dbm", path);
  if (j.contains("location")) {
    const auto& loc = j.at("location");
    if (loc.is_string()) {
      r.label = loc.get<std::string>();
    } else {
      r.label = detail::get_or<std::string>(loc, "label", "", path + ".location");
      if (loc.contains("xyz_m")) r.xyz_m = detail::get_required<Position>(loc, "xyz_m", path + ".location");
    }
  }
  validate(r);
  return r;
}

json to_json(const ConfigSnapshot& s) {
  return {{"inventory_hash", s.inventory_hash}, {"reservation_id", s.reservation_id},
          {"scenario_hash", s.scenario_hash},   {"software", s.software},
          {"sample_formats", s.sample_formats}, {"created_utc", s.created_utc}};
}

ConfigSnapshot config_snapshot_from_json(const json& j) {
  const std::string path = "snapshot";
  ConfigSnapshot s;
  s.inventory_hash = detail::get_or<std::string>(j, "inventory_hash", "", path);
  s.reservation_id = detail::get_or<std::string>(j, "reservation_id", "", path);
  s.scenario_hash = detail::get_or<std::string>(j, "scenario_hash", "", path);
  s.software = detail::get_or<std::vector<std::string>>(j, "software", {}, path);
  s.sample_formats = detail::get_or<std::vector<std::string>>(j, "sample_formats", {}, path);
  s.created_utc = detail::get_or<Timestamp>(j, "created_utc", 0, path);
  return s;
}

ConfigSnapshot make_config_snapshot(const Inventory& inv, const Reservation& r, const ChannelScenario* scenario,
                                    std::vector<std::string> sample_formats, Timestamp now) {
  ConfigSnapshot s;
  s.inventory_hash = inventory_hash(inv);
  s.reservation_id = r.id;
  if (scenario) s.scenario_hash = scenario_hash(*scenario);
  s.software = r.spec.compute.software;
  if (sample_formats.empty()) sample_formats.emplace_back(to_string(SampleFormat::SC16));
  s.sample_formats = std::move(sample_formats);
  s.created_utc = now;
  return s;
}

bool RecordFilter::matches(const ExperimentRecord& r) const {
  if (t_utc && (r.t_utc < t_utc->first || r.t_utc > t_utc->second)) return false;
  if (node_id && r.node_id != *node_id) return false;
  if (freq_hz && (r.freq_hz < freq_hz->first || r.freq_hz > freq_hz->second)) return false;
  if (azimuth_deg && (r.azimuth_deg < azimuth_deg->first || r.azimuth_deg > azimuth_deg->second)) return false;
  return true;
}

json to_json(const ArchiveInfo& a) {
  json j = {{"experiment_id", a.experiment_id},
            {"snapshot", to_json(a.snapshot)},
            {"record_count", a.record_count},
            {"sealed", a.sealed}};
  j["digest"] = a.sealed ? json(a.digest) : json(nullptr);
  return j;
}

std::string format_record_line(const ExperimentRecord& r) {
  std::string line = fmt_double(r.t_utc);
  line += '\t';
  line += r.node_id;
  for (int k = 0; k < 3; ++k) {
    line += '\t';
    if (r.xyz_m) line += fmt_double((*r.xyz_m)[static_cast<std::size_t>(k)]);
  }
  line += '\t';
  line += r.label;
  for (double v : {r.freq_hz, r.azimuth_deg, r.value_dbm}) {
    line += '\t';
    line += fmt_double(v);
  }
  line += '\n';
  return line;
}

ExperimentRecord parse_record_line(const std::string& line) {
  std::vector<std::string> f;
  std::size_t start = 0;
  const std::string body = !line.empty() && line.back() == '\n' ? line.substr(0, line.size() - 1) : line;
  while (true) {
    const auto tab = body.find('\t', start);
    f.push_back(body.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  if (f.size() != 9) throw Error(ErrorKind::Parse, "record line has " + std::to_string(f.size()) + " fields, want 9");
  ExperimentRecord r;
  r.t_utc = parse_double(f[0], "t_utc");
  r.node_id = f[1];
  if (!f[2].empty() || !f[3].empty() || !f[4].empty())
    r.xyz_m = Position{parse_double(f[2], "x"), parse_double(f[3], "y"), parse_double(f[4], "z")};
  r.label = f[5];
  r.freq_hz = parse_double(f[6], "freq_hz");
  r.azimuth_deg = parse_double(f[7], "azimuth_deg");
  r.value_dbm = parse_double(f[8], "value_dbm");
  return r;
}

struct ExperimentStore::Archive {
  std::string id;
  fs::path dir;
  ConfigSnapshot snapshot;
  std::vector<ExperimentRecord> records;
  std::map<std::string, std::vector<std::size_t>> by_node;  ///< indexes in append (= time) order
  bool sealed = false;
  std::string digest;
  int fd = -1;
  mutable std::shared_mutex mutex;

  ~Archive() {
    if (fd >= 0) ::close(fd);
  }

  fs::path log_path() const { return dir / "records.log"; }

  void index(const ExperimentRecord& r) {
    by_node[r.node_id].push_back(records.size());
    records.push_back(r);
  }

  std::string compute_digest() const {
    Sha256 h;
    h.update(to_json(snapshot).dump());
    h.update("\n");
    for (const auto& r : records) h.update(format_record_line(r));
    return h.hex_digest();
  }
};

ExperimentStore::ExperimentStore(std::string root, bool sync) : root_(std::move(root)), sync_(sync) {
  std::error_code ec;
  fs::create_directories(root_, ec);
  if (ec) throw Error(ErrorKind::Recovery, "cannot create experiment store " + root_ + ": " + ec.message());
  for (const auto& entry : fs::directory_iterator(root_)) {
    if (!entry.is_directory() || !fs::exists(entry.path() / "snapshot.json")) continue;
    auto a = std::make_unique<Archive>();
    a->dir = entry.path();
    try {
      const json doc = detail::parse_document(detail::read_file((a->dir / "snapshot.json").string()));
      a->id = doc.at("experiment_id").get<std::string>();
      a->snapshot = config_snapshot_from_json(doc.at("snapshot"));
    } catch (const std::exception& e) {
      throw Error(ErrorKind::Recovery, "unreadable snapshot in " + a->dir.string() + ": " + e.what());
    }
    const auto log = a->log_path().string();
    const std::string text = fs::exists(log) ? detail::read_file(log) : std::string();
    std::size_t pos = 0;
    while (pos < text.size()) {
      const auto nl = text.find('\n', pos);
      if (nl == std::string::npos) {
        fs::resize_file(log, pos);
        break;
      }
      try {
        a->index(parse_record_line(text.substr(pos, nl - pos)));
      } catch (const Error& e) {
        throw Error(ErrorKind::Recovery, log + ": bad record at byte offset " + std::to_string(pos) + ": " + e.what());
      }
      pos = nl + 1;
    }
    const auto seal_path = a->dir / "seal.json";
    if (fs::exists(seal_path)) {
      a->sealed = true;
      a->digest = detail::parse_document(detail::read_file(seal_path.string())).value("digest", "");
    }
    unsigned long long n = 0;
    if (std::sscanf(a->id.c_str(), "exp-%llu", &n) == 1) next_id_ = std::max<std::uint64_t>(next_id_, n + 1);
    archives_[a->id] = std::move(a);
  }
}

ExperimentStore::~ExperimentStore() = default;

ExperimentStore::Archive& ExperimentStore::find(const std::string& id) const {
  std::shared_lock lock(mutex_);
  auto it = archives_.find(id);
  if (it == archives_.end()) throw Error(ErrorKind::NotFound, "unknown experiment '" + id + "'", "experiment_id");
  return *it->second;
}

ArchiveInfo ExperimentStore::open_experiment(const Reservation& r, ConfigSnapshot snapshot) {
  if (r.state != ReservationState::Active)
    throw Error(ErrorKind::State,
                "reservation " + r.id + " is " + std::string(to_string(r.state)) + ", experiments need Active",
                "reservation_id");
  snapshot.reservation_id = r.id;
  std::unique_lock lock(mutex_);
  char id[32];
  std::snprintf(id, sizeof id, "exp-%06llu", static_cast<unsigned long long>(next_id_++));
  auto a = std::make_unique<Archive>();
  a->id = id;
  a->dir = fs::path(root_) / id;
  a->snapshot = std::move(snapshot);
  fs::create_directories(a->dir);
  detail::write_file_atomic(a->log_path().string(), "");
  detail::write_file_atomic((a->dir / "snapshot.json").string(),
                            json{{"experiment_id", a->id}, {"snapshot", to_json(a->snapshot)}}.dump(2) + "\n");
  ArchiveInfo info{a->id, a->snapshot, 0, false, {}};
  archives_[a->id] = std::move(a);
  return info;
}

void ExperimentStore::write_records(Archive& a, const std::vector<ExperimentRecord>& records) {
  if (a.sealed) throw Error(ErrorKind::Sealed, "experiment " + a.id + " is sealed", "experiment_id");
  std::map<std::string, double> last;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    validate(r);
    double prev = -INFINITY;
    if (auto it = last.find(r.node_id); it != last.end()) {
      prev = it->second;
    } else if (auto idx = a.by_node.find(r.node_id); idx != a.by_node.end()) {
      prev = a.records[idx->second.back()].t_utc;
    }
    if (r.t_utc < prev)
      throw Error(ErrorKind::Order,
                  "record time " + fmt_double(r.t_utc) + " precedes " + fmt_double(prev) + " on node " + r.node_id,
                  "t_utc");
    last[r.node_id] = r.t_utc;
  }
  std::string bytes;
  for (const auto& r : records) bytes += format_record_line(r);
  if (a.fd < 0) {
    a.fd = ::open(a.log_path().c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (a.fd < 0) throw Error(ErrorKind::Validation, "cannot open " + a.log_path().string() + ": " + std::strerror(errno));
  }
  write_all(a.fd, bytes, a.log_path().string());
  if (sync_) ::fdatasync(a.fd);
  for (const auto& r : records) a.index(r);
}

void ExperimentStore::append(const std::string& experiment_id, const ExperimentRecord& record) {
  auto& a = find(experiment_id);
  std::unique_lock lock(a.mutex);
  write_records(a, {record});
}

void ExperimentStore::append_batch(const std::string& experiment_id, const std::vector<ExperimentRecord>& records) {
  auto& a = find(experiment_id);
  std::unique_lock lock(a.mutex);
  write_records(a, records);
}

std::vector<ExperimentRecord> ExperimentStore::query(const std::string& experiment_id,
                                                     const RecordFilter& filter) const {
  const auto& a = find(experiment_id);
  std::shared_lock lock(a.mutex);
  std::vector<ExperimentRecord> out;
  if (filter.node_id) {
    auto it = a.by_node.find(*filter.node_id);
    if (it == a.by_node.end()) return out;
    const auto& idx = it->second;
    auto first = idx.begin();
    auto last = idx.end();
    if (filter.t_utc) {
      first = std::lower_bound(idx.begin(), idx.end(), filter.t_utc->first,
                               [&](std::size_t i, double t) { return a.records[i].t_utc < t; });
      last = std::upper_bound(first, idx.end(), filter.t_utc->second,
                              [&](double t, std::size_t i) { return t < a.records[i].t_utc; });
    }
    for (auto i = first; i < last; ++i)
      if (filter.matches(a.records[*i])) out.push_back(a.records[*i]);
  } else {
    for (const auto& r : a.records)
      if (filter.matches(r)) out.push_back(r);
  }
  std::stable_sort(out.begin(), out.end(), record_less);
  return out;
}

std::string ExperimentStore::seal(const std::string& experiment_id) {
  auto& a = find(experiment_id);
  std::unique_lock lock(a.mutex);
  if (a.sealed) throw Error(ErrorKind::Sealed, "experiment " + a.id + " is already sealed", "experiment_id");
  const std::string digest = a.compute_digest();
  detail::write_file_atomic((a.dir / "seal.json").string(), json{{"digest", digest}}.dump() + "\n");
  a.sealed = true;
  a.digest = digest;
  if (a.fd >= 0) {
    ::close(a.fd);
    a.fd = -1;
  }
  return digest;
}

ArchiveInfo ExperimentStore::info(const std::string& experiment_id) const {
  const auto& a = find(experiment_id);
  std::shared_lock lock(a.mutex);
  return {a.id, a.snapshot, a.records.size(), a.sealed, a.digest};
}

std::vector<ArchiveInfo> ExperimentStore::list() const {
  std::vector<std::string> ids;
  {
    std::shared_lock lock(mutex_);
    for (const auto& [id, a] : archives_) ids.push_back(id);
  }
  std::vector<ArchiveInfo> out;
  for (const auto& id : ids) out.push_back(info(id));
  return out;
}

}  // namespace sdrbed
