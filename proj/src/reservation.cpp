#include "sdrbed/reservation.hpp"

#include <cstdio>
#include <ctime>

#include "json_util.hpp"
#include "sdrbed/error.hpp"

namespace sdrbed {

using detail::get_array;
using detail::get_or;
using nlohmann::json;

Timestamp parse_utc(std::string_view text) {
  std::string s(text);
  if (s.empty()) throw Error(ErrorKind::Validation, "empty timestamp", "time");
  bool numeric = true;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (!(std::isdigit(static_cast<unsigned char>(s[i])) || (i == 0 && s[i] == '-'))) numeric = false;
  if (numeric) return std::stoll(s);
  std::tm tm{};
  int consumed = 0;
  if (std::sscanf(s.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%n", &tm.tm_year, &tm.tm_mon, &tm.tm_mday, &tm.tm_hour,
                  &tm.tm_min, &tm.tm_sec, &consumed) != 6 ||
      (static_cast<std::size_t>(consumed) != s.size() && s.substr(static_cast<std::size_t>(consumed)) != "Z")) {
    throw Error(ErrorKind::Validation, "timestamp '" + s + "' is neither epoch seconds nor YYYY-MM-DDTHH:MM:SSZ",
                "time");
  }
  tm.tm_year -= 1900;
  tm.tm_mon -= 1;
  return static_cast<Timestamp>(timegm(&tm));
}

std::string format_utc(Timestamp t) {
  std::time_t tt = static_cast<std::time_t>(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string_view to_string(ReservationState s) {
  switch (s) {
    case ReservationState::Requested: return "Requested";
    case ReservationState::Tentative: return "Tentative";
    case ReservationState::PendingReview: return "PendingReview";
    case ReservationState::Confirmed: return "Confirmed";
    case ReservationState::Denied: return "Denied";
    case ReservationState::Active: return "Active";
    case ReservationState::Completed: return "Completed";
    case ReservationState::Cancelled: return "Cancelled";
  }
  return "?";
}

ReservationState reservation_state_from_string(std::string_view text) {
  for (auto s : {ReservationState::Requested, ReservationState::Tentative, ReservationState::PendingReview,
                 ReservationState::Confirmed, ReservationState::Denied, ReservationState::Active,
                 ReservationState::Completed, ReservationState::Cancelled}) {
    if (to_string(s) == text) return s;
  }
  throw Error(ErrorKind::Parse, "unknown reservation state '" + std::string(text) + "'");
}

bool is_terminal(ReservationState s) {
  return s == ReservationState::Denied || s == ReservationState::Completed || s == ReservationState::Cancelled;
}

bool transition_allowed(ReservationState from, ReservationState to) {
  using S = ReservationState;
  if (to == S::Cancelled) return !is_terminal(from);
  switch (from) {
    case S::Requested: return to == S::Tentative;
    case S::Tentative: return to == S::Confirmed || to == S::PendingReview || to == S::Denied;
    case S::PendingReview: return to == S::Confirmed || to == S::Denied;
    case S::Confirmed: return to == S::Active;
    case S::Active: return to == S::Completed;
    default: return false;
  }
}

SurveyForm make_survey(const std::string& reservation_id) {
  return SurveyForm{reservation_id,
                    {"Were the allocated resources adequate for the experiment?",
                     "How did actual usage compare with the scheduled usage?",
                     "Additional comments"},
                    std::nullopt};
}

json to_json(const ResourceSpec& spec) {
  json channels = json::array();
  for (const auto& c : spec.radio.channels) channels.push_back({{"center_hz", c.center_hz}, {"bw_hz", c.bw_hz}});
  return {{"compute",
           {{"ram_gb", spec.compute.ram_gb},
            {"storage_gb", spec.compute.storage_gb},
            {"vm_lifetime_s", spec.compute.vm_lifetime_s},
            {"cpu_threads", spec.compute.cpu_threads},
            {"cpu_cores", spec.compute.cpu_cores},
            {"software", spec.compute.software}}},
          {"radio",
           {{"n_usrps", spec.radio.n_usrps},
            {"channels", channels},
            {"path", std::string(to_string(spec.radio.path))}}},
          {"network", {{"requested_bps", spec.network.requested_bps}}}};
}

ResourceSpec resource_spec_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::Spec, "spec must be an object", "spec");
  ResourceSpec s;
  try {
    static const json kEmpty = json::object();
    const json& c = j.contains("compute") ? j.at("compute") : kEmpty;
    s.compute.ram_gb = get_or<double>(c, "ram_gb", 0.0, "spec.compute");
    s.compute.storage_gb = get_or<double>(c, "storage_gb", 0.0, "spec.compute");
    s.compute.vm_lifetime_s = get_or<std::int64_t>(c, "vm_lifetime_s", 0, "spec.compute");
    s.compute.cpu_threads = get_or<int>(c, "cpu_threads", 0, "spec.compute");
    s.compute.cpu_cores = get_or<int>(c, "cpu_cores", 0, "spec.compute");
    s.compute.software = get_or<std::vector<std::string>>(c, "software", {}, "spec.compute");
    const json& r = j.contains("radio") ? j.at("radio") : kEmpty;
    s.radio.n_usrps = get_or<int>(r, "n_usrps", 0, "spec.radio");
    for (const auto& ch : get_array(r, "channels", "spec.radio")) {
      s.radio.channels.push_back({detail::get_required<double>(ch, "center_hz", "spec.radio.channels"),
                                  detail::get_required<double>(ch, "bw_hz", "spec.radio.channels")});
    }
    s.radio.path = radio_path_from_string(get_or<std::string>(r, "path", "OverTheAir", "spec.radio"));
    const json& n = j.contains("network") ? j.at("network") : kEmpty;
    s.network.requested_bps = get_or<double>(n, "requested_bps", 0.0, "spec.network");
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Validation) throw Error(ErrorKind::Spec, e.what(), e.field());
    throw;
  }
  return s;
}

json to_json(const SurveyForm& s) {
  json j = {{"reservation_id", s.reservation_id}, {"questions", s.questions}};
  j["responses"] = s.responses ? json(*s.responses) : json(nullptr);
  return j;
}

SurveyForm survey_from_json(const json& j) {
  SurveyForm s;
  s.reservation_id = j.at("reservation_id").get<std::string>();
  s.questions = j.at("questions").get<std::vector<std::string>>();
  if (j.contains("responses") && !j.at("responses").is_null())
    s.responses = j.at("responses").get<std::vector<std::string>>();
  return s;
}

json to_json(const Reservation& r) {
  json audit = json::array();
  for (const auto& a : r.audit) {
    audit.push_back({{"t_utc", a.t_utc},
                     {"from", std::string(to_string(a.from))},
                     {"to", std::string(to_string(a.to))},
                     {"actor", a.actor},
                     {"note", a.note}});
  }
  json j = {{"id", r.id},
            {"user", r.user},
            {"window", {{"start_utc", r.window.start_utc}, {"end_utc", r.window.end_utc}}},
            {"spec", to_json(r.spec)},
            {"state", std::string(to_string(r.state))},
            {"audit", audit}};
  j["survey"] = r.survey ? to_json(*r.survey) : json(nullptr);
  j["activated_at"] = r.activated_at ? json(*r.activated_at) : json(nullptr);
  j["completed_at"] = r.completed_at ? json(*r.completed_at) : json(nullptr);
  return j;
}

Reservation reservation_from_json(const json& j) {
  Reservation r;
  r.id = j.at("id").get<std::string>();
  r.user = j.at("user").get<std::string>();
  r.window = {j.at("window").at("start_utc").get<Timestamp>(), j.at("window").at("end_utc").get<Timestamp>()};
  r.spec = resource_spec_from_json(j.at("spec"));
  r.state = reservation_state_from_string(j.at("state").get<std::string>());
  for (const auto& a : j.at("audit")) {
    r.audit.push_back({a.at("t_utc").get<Timestamp>(), reservation_state_from_string(a.at("from").get<std::string>()),
                       reservation_state_from_string(a.at("to").get<std::string>()), a.at("actor").get<std::string>(),
                       a.at("note").get<std::string>()});
  }
  if (j.contains("survey") && !j.at("survey").is_null()) r.survey = survey_from_json(j.at("survey"));
  if (j.contains("activated_at") && !j.at("activated_at").is_null()) r.activated_at = j.at("activated_at").get<Timestamp>();
  if (j.contains("completed_at") && !j.at("completed_at").is_null()) r.completed_at = j.at("completed_at").get<Timestamp>();
  return r;
}

json to_json(const UsageEntry& u) {
  return {{"scheduled_seconds", u.scheduled_seconds},
          {"actual_seconds", u.actual_seconds},
          {"resources_held", u.resources_held}};
}

UsageEntry usage_from_json(const json& j) {
  return {j.at("scheduled_seconds").get<std::int64_t>(), j.at("actual_seconds").get<std::int64_t>(),
          j.at("resources_held").get<std::string>()};
}

}  // namespace sdrbed
