#include "sdrbed/chanem.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <set>
#include <sstream>

#include "json_util.hpp"
#include "sdrbed/digest.hpp"
#include "sdrbed/error.hpp"

namespace sdrbed {

using nlohmann::json;

namespace {

[[noreturn]] void bad_scenario(const std::string& why) { throw Error(ErrorKind::Scenario, why, "scenario"); }

double fspl_db(double d_m, double f_hz) { return 20.0 * std::log10(d_m) + 20.0 * std::log10(f_hz) + kFsplConstantDb; }

double distance(const Position& a, const Position& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Box-Muller over mt19937_64; both are fully specified, so a seed yields the
// same sequence on every platform.
class GaussianSource {
 public:
  explicit GaussianSource(std::uint64_t seed) : engine_(seed) {}

  double next() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

std::string_view to_string(RadioKind k) { return k == RadioKind::Physical ? "Physical" : "Virtual"; }

RadioKind radio_kind_from_string(const std::string& s) {
  if (s == "Physical") return RadioKind::Physical;
  if (s == "Virtual") return RadioKind::Virtual;
  bad_scenario("unknown radio kind '" + s + "'");
}

Position position_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) bad_scenario("positions must be [x, y, z] arrays");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

std::size_t AttenuationMatrix::index_of(const std::string& id) const {
  auto it = std::find(ids.begin(), ids.end(), id);
  if (it == ids.end()) throw Error(ErrorKind::Scenario, "radio '" + id + "' is not in the matrix", "radio_id");
  return static_cast<std::size_t>(it - ids.begin());
}

double path_loss_db(const ChannelModel& model, double d_m, double f_hz) {
  if (!(d_m > 0)) throw Error(ErrorKind::Domain, "distance must be > 0", "d_m");
  if (!(f_hz > 0)) throw Error(ErrorKind::Domain, "frequency must be > 0", "f_hz");
  if (std::holds_alternative<LogDistance>(model)) {
    const auto& ld = std::get<LogDistance>(model);
    return fspl_db(ld.d0_m, f_hz) + 10.0 * ld.exponent * std::log10(d_m / ld.d0_m);
  }
  if (std::holds_alternative<Empirical>(model))
    throw Error(ErrorKind::Domain, "empirical models have no closed-form path loss", "model");
  return fspl_db(d_m, f_hz);
}

void validate(const ChannelScenario& sc) {
  std::set<std::string> ids;
  std::size_t physical = 0;
  for (const auto& r : sc.radios) {
    if (r.id.empty()) bad_scenario("radio ids must be non-empty");
    if (!ids.insert(r.id).second) bad_scenario("duplicate radio id '" + r.id + "'");
    if (r.kind == RadioKind::Physical) ++physical;
  }
  if (physical > kMaxPhysicalRadios)
    bad_scenario("at most " + std::to_string(kMaxPhysicalRadios) + " physical radios are supported");
  if (!(sc.carrier_hz > 0)) bad_scenario("carrier_hz must be > 0");
  for (std::size_t i = 0; i < sc.keyframes.size(); ++i) {
    if (sc.keyframes[i].t_s < 0) bad_scenario("keyframe times must be >= 0");
    if (i > 0 && !(sc.keyframes[i].t_s > sc.keyframes[i - 1].t_s)) bad_scenario("keyframe times must increase");
    for (const auto& [id, pos] : sc.keyframes[i].positions)
      if (!ids.count(id)) bad_scenario("keyframe references unknown radio '" + id + "'");
  }
  if (const auto* ld = std::get_if<LogDistance>(&sc.model)) {
    if (!(ld->d0_m > 0) || !(ld->exponent > 0)) bad_scenario("log-distance model needs d0_m > 0 and exponent > 0");
  }
  if (const auto* emp = std::get_if<Empirical>(&sc.model)) {
    if (emp->records.empty()) bad_scenario("empirical model has no matrix records");
    const std::size_t n = emp->radio_ids.empty() ? sc.radios.size() : emp->radio_ids.size();
    for (const auto& id : emp->radio_ids)
      if (!ids.count(id)) bad_scenario("empirical matrix names unknown radio '" + id + "'");
    double prev = -1;
    for (const auto& [t, m] : emp->records) {
      if (!(t > prev)) bad_scenario("empirical record times must increase");
      prev = t;
      if (m.size() != n) bad_scenario("empirical matrix has the wrong dimension");
      for (const auto& row : m) {
        if (row.size() != n) bad_scenario("empirical matrix has the wrong dimension");
      }
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          if (i != j && !(m[i][j] >= 0)) bad_scenario("attenuation must be >= 0 off the diagonal");
    }
  }
}

std::map<std::string, Position> positions_at(const ChannelScenario& sc, double t_s) {
  std::map<std::string, Position> out;
  for (const auto& r : sc.radios) {
    std::vector<std::pair<double, Position>> track{{0.0, r.position_m}};
    for (const auto& kf : sc.keyframes) {
      auto it = kf.positions.find(r.id);
      if (it == kf.positions.end()) continue;
      if (kf.t_s == 0.0)
        track.front().second = it->second;
      else
        track.emplace_back(kf.t_s, it->second);
    }
    Position p = track.back().second;
    if (t_s <= track.front().first) {
      p = track.front().second;
    } else {
      for (std::size_t i = 0; i + 1 < track.size(); ++i) {
        const auto& [t0, p0] = track[i];
        const auto& [t1, p1] = track[i + 1];
        if (t_s >= t0 && t_s <= t1) {
          const double u = (t_s - t0) / (t1 - t0);
          for (int k = 0; k < 3; ++k) p[k] = p0[k] + u * (p1[k] - p0[k]);
          break;
        }
      }
    }
    out[r.id] = p;
  }
  return out;
}

AttenuationMatrix attenuation_at(const ChannelScenario& sc, double t_s) {
  if (sc.radios.empty()) bad_scenario("scenario has no radios");
  if (!(t_s >= 0)) bad_scenario("time must be >= 0");
  AttenuationMatrix m;
  m.t_s = t_s;
  if (const auto* emp = std::get_if<Empirical>(&sc.model)) {
    if (emp->records.empty()) bad_scenario("empirical model has no matrix records");
    if (emp->radio_ids.empty()) {
      for (const auto& r : sc.radios) m.ids.push_back(r.id);
    } else {
      m.ids = emp->radio_ids;
    }
    auto chosen = emp->records.begin();
    for (auto it = emp->records.begin(); it != emp->records.end(); ++it)
      if (it->first <= t_s) chosen = it;
    m.a_db = chosen->second;
    for (std::size_t i = 0; i < m.a_db.size(); ++i) m.a_db[i][i] = 0.0;
    return m;
  }
  const auto pos = positions_at(sc, t_s);
  const std::size_t n = sc.radios.size();
  for (const auto& r : sc.radios) m.ids.push_back(r.id);
  m.a_db.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = distance(pos.at(m.ids[i]), pos.at(m.ids[j]));
      if (!(d > 0)) bad_scenario("radios '" + m.ids[i] + "' and '" + m.ids[j] + "' are co-located");
      const double loss = std::max(0.0, path_loss_db(sc.model, d, sc.carrier_hz));
      m.a_db[i][j] = m.a_db[j][i] = loss;
    }
  }
  return m;
}

IqBuffer apply_channel(const std::vector<TxStream>& tx, const AttenuationMatrix& m, const std::string& rx_id,
                       std::optional<double> noise_floor_dbm_hz, std::uint64_t seed) {
  const std::size_t rx = m.index_of(rx_id);
  IqBuffer out;
  if (!tx.empty()) {
    out.rate_sps = tx.front().buffer.rate_sps;
    for (const auto& t : tx) {
      if (t.buffer.rate_sps != out.rate_sps || t.buffer.size() != tx.front().buffer.size())
        throw Error(ErrorKind::Rate, "transmit buffers must share rate and length", "tx");
    }
    out.samples.assign(tx.front().buffer.size(), Complex{});
  }
  for (const auto& t : tx) {
    const std::size_t i = m.index_of(t.radio_id);
    if (i == rx) continue;
    const double gain = std::pow(10.0, -m.a_db[i][rx] / 20.0);
    for (std::size_t n = 0; n < out.samples.size(); ++n) out.samples[n] += gain * t.buffer.samples[n];
  }
  if (noise_floor_dbm_hz && !out.samples.empty()) {
    if (!(out.rate_sps > 0)) throw Error(ErrorKind::Rate, "noise needs a positive sample rate", "rate_sps");
    const double power_mw = std::pow(10.0, (*noise_floor_dbm_hz + 10.0 * std::log10(out.rate_sps)) / 10.0);
    const double sigma = std::sqrt(power_mw / 2.0);
    GaussianSource g(seed);
    for (auto& s : out.samples) {
      const double re = g.next();
      const double im = g.next();
      s += Complex{sigma * re, sigma * im};
    }
  }
  return out;
}

std::vector<TimelineStep> run_timeline(const ChannelScenario& sc, double duration_s, double step_s,
                                       const std::vector<TxStream>& tx, std::uint64_t seed) {
  if (!(step_s > 0)) bad_scenario("step_s must be > 0");
  if (!(duration_s >= 0)) bad_scenario("duration_s must be >= 0");
  validate(sc);
  if (sc.radios.empty()) bad_scenario("scenario has no radios");
  std::vector<TimelineStep> out;
  for (std::uint64_t k = 0;; ++k) {
    const double t = static_cast<double>(k) * step_s;
    if (!(t < duration_s)) break;
    TimelineStep step;
    step.t_s = t;
    step.matrix = attenuation_at(sc, t);
    for (std::size_t r = 0; r < sc.radios.size(); ++r) {
      const std::uint64_t s = splitmix64(splitmix64(seed ^ splitmix64(k)) + r);
      step.rx[sc.radios[r].id] = apply_channel(tx, step.matrix, sc.radios[r].id, sc.noise_floor_dbm_hz, s);
    }
    out.push_back(std::move(step));
  }
  return out;
}

Empirical parse_matrix_text(const std::string& text) {
  Empirical e;
  std::istringstream in(text);
  std::string line;
  std::vector<std::vector<double>>* current = nullptr;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    if (line[first] == '#') {
      std::istringstream hs(line.substr(first + 1));
      std::string word;
      hs >> word;
      if (word == "radios:") {
        while (hs >> word) e.radio_ids.push_back(word);
      }
      continue;
    }
    if (line[first] == '@') {
      double t = 0;
      std::istringstream ts(line.substr(first + 1));
      if (!(ts >> t)) throw Error(ErrorKind::Parse, "bad timestamp line in matrix file: " + line);
      e.records.emplace_back(t, std::vector<std::vector<double>>{});
      current = &e.records.back().second;
      continue;
    }
    if (!current) throw Error(ErrorKind::Parse, "matrix row before any '@ t' line");
    std::istringstream rs(line);
    std::vector<double> row;
    double v;
    while (rs >> v) row.push_back(v);
    if (!rs.eof()) throw Error(ErrorKind::Parse, "non-numeric value in matrix row: " + line);
    current->push_back(std::move(row));
  }
  return e;
}

Empirical load_matrix_file(const std::string& path) {
  auto e = parse_matrix_text(detail::read_file(path));
  e.source = path;
  return e;
}

ChannelScenario scenario_from_json(const json& j, const std::string& base_dir) {
  if (!j.is_object()) throw Error(ErrorKind::Parse, "scenario document must be an object");
  ChannelScenario sc;
  try {
    sc.carrier_hz = j.value("carrier_hz", sc.carrier_hz);
    if (j.contains("noise_floor_dbm_hz") && !j.at("noise_floor_dbm_hz").is_null())
      sc.noise_floor_dbm_hz = j.at("noise_floor_dbm_hz").get<double>();
    for (const auto& r : j.at("radios")) {
      sc.radios.push_back({r.at("id").get<std::string>(), radio_kind_from_string(r.value("kind", "Physical")),
                           r.contains("position_m") ? position_from_json(r.at("position_m")) : Position{}});
    }
    if (j.contains("keyframes")) {
      for (const auto& kf : j.at("keyframes")) {
        Keyframe k;
        k.t_s = kf.at("t_s").get<double>();
        if (kf.contains("positions"))
          for (const auto& [id, p] : kf.at("positions").items()) k.positions[id] = position_from_json(p);
        sc.keyframes.push_back(std::move(k));
      }
    }
    const json model = j.value("model", json{{"kind", "FreeSpace"}});
    const std::string kind = model.value("kind", "FreeSpace");
    if (kind == "FreeSpace") {
      sc.model = FreeSpace{};
    } else if (kind == "LogDistance") {
      sc.model = LogDistance{model.value("exponent", 2.0), model.value("d0_m", 1.0)};
    } else if (kind == "Empirical") {
      Empirical e;
      if (model.contains("matrix_file")) {
        std::filesystem::path p = model.at("matrix_file").get<std::string>();
        if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
        e = load_matrix_file(p.string());
      }
      if (model.contains("radio_ids")) e.radio_ids = model.at("radio_ids").get<std::vector<std::string>>();
      if (model.contains("records")) {
        e.records.clear();
        for (const auto& rec : model.at("records"))
          e.records.emplace_back(rec.at("t_s").get<double>(), rec.at("a_db").get<std::vector<std::vector<double>>>());
      }
      sc.model = std::move(e);
    } else {
      bad_scenario("unknown channel model '" + kind + "'");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Scenario, std::string("bad scenario document: ") + e.what(), "scenario");
  }
  validate(sc);
  return sc;
}

ChannelScenario load_scenario_file(const std::string& path) {
  const auto dir = std::filesystem::path(path).parent_path().string();
  return scenario_from_json(detail::parse_document(detail::read_file(path)), dir.empty() ? "." : dir);
}

json to_json(const ChannelScenario& sc) {
  json radios = json::array();
  for (const auto& r : sc.radios)
    radios.push_back({{"id", r.id}, {"kind", std::string(to_string(r.kind))}, {"position_m", r.position_m}});
  json keyframes = json::array();
  for (const auto& k : sc.keyframes) {
    json pos = json::object();
    for (const auto& [id, p] : k.positions) pos[id] = p;
    keyframes.push_back({{"t_s", k.t_s}, {"positions", pos}});
  }
  json model;
  if (std::holds_alternative<FreeSpace>(sc.model)) {
    model = {{"kind", "FreeSpace"}};
  } else if (const auto* ld = std::get_if<LogDistance>(&sc.model)) {
    model = {{"kind", "LogDistance"}, {"exponent", ld->exponent}, {"d0_m", ld->d0_m}};
  } else {
    const auto& e = std::get<Empirical>(sc.model);
    json records = json::array();
    for (const auto& [t, m] : e.records) records.push_back({{"t_s", t}, {"a_db", m}});
    model = {{"kind", "Empirical"}, {"radio_ids", e.radio_ids}, {"records", records}};
  }
  json j = {{"carrier_hz", sc.carrier_hz}, {"radios", radios}, {"keyframes", keyframes}, {"model", model}};
  j["noise_floor_dbm_hz"] = sc.noise_floor_dbm_hz ? json(*sc.noise_floor_dbm_hz) : json(nullptr);
  return j;
}

json to_json(const AttenuationMatrix& m) { return {{"t_s", m.t_s}, {"ids", m.ids}, {"a_db", m.a_db}}; }

std::string scenario_hash(const ChannelScenario& sc) { return sha256_hex(to_json(sc).dump()); }

}  // namespace sdrbed
