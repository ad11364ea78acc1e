#include "sdrbed/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "sdrbed/error.hpp"

namespace sdrbed {

using nlohmann::json;

std::string_view to_string(ConflictKind k) {
  switch (k) {
    case ConflictKind::Devices: return "devices";
    case ConflictKind::Spectrum: return "spectrum";
    case ConflictKind::Compute: return "compute";
    case ConflictKind::Network: return "network";
  }
  return "?";
}

json to_json(const Conflict& c) {
  return {{"kind", std::string(to_string(c.kind))}, {"with", c.with}, {"detail", c.detail}};
}

namespace {

[[noreturn]] void bad_spec(const std::string& field, const std::string& why) {
  throw Error(ErrorKind::Spec, field + ": " + why, field);
}

bool nonneg(double v) { return std::isfinite(v) && v >= 0; }

double pool_devices(const Inventory& inv, RadioPath path) { return static_cast<double>(inv.device_count(path)); }

}  // namespace

void validate_request(const ResourceSpec& spec, const TimeWindow& window, const Inventory& inv) {
  if (!(window.start_utc < window.end_utc)) bad_spec("window", "start_utc must precede end_utc");
  const auto& c = spec.compute;
  if (!nonneg(c.ram_gb)) bad_spec("compute.ram_gb", "must be >= 0");
  if (!nonneg(c.storage_gb)) bad_spec("compute.storage_gb", "must be >= 0");
  if (c.vm_lifetime_s < 0) bad_spec("compute.vm_lifetime_s", "must be >= 0");
  if (c.cpu_threads < 0) bad_spec("compute.cpu_threads", "must be >= 0");
  if (c.cpu_cores < 0) bad_spec("compute.cpu_cores", "must be >= 0");
  for (const auto& label : c.software)
    if (!inv.knows_software(label)) bad_spec("compute.software", "unknown package '" + label + "'");
  const auto& r = spec.radio;
  if (r.n_usrps < 0) bad_spec("radio.n_usrps", "must be >= 0");
  if (!r.channels.empty() && r.n_usrps < 1) bad_spec("radio.n_usrps", "channels require at least one USRP");
  if (!nonneg(spec.network.requested_bps)) bad_spec("network.requested_bps", "must be >= 0");

  double max_center = 0, max_node_bw = 0;
  std::map<std::string, double> node_bw;
  for (const auto& d : inv.sdr_devices) {
    if (d.attachment != r.path) continue;
    max_center = std::max(max_center, d.max_center_freq_hz);
    max_node_bw = std::max(max_node_bw, node_bw[d.node_id] += d.max_instant_bw_hz);
  }
  for (std::size_t i = 0; i < r.channels.size(); ++i) {
    const auto& ch = r.channels[i];
    const std::string f = "radio.channels[" + std::to_string(i) + "]";
    if (!(std::isfinite(ch.bw_hz) && ch.bw_hz > 0)) bad_spec(f + ".bw_hz", "must be > 0");
    if (!(std::isfinite(ch.center_hz) && ch.center_hz > 0)) bad_spec(f + ".center_hz", "must be > 0");
    if (r.path == RadioPath::OverTheAir) {
      const bool licensed = std::any_of(inv.licensed_bands.begin(), inv.licensed_bands.end(),
                                        [&](const LicensedBand& b) { return b.contains(ch.low_hz(), ch.high_hz()); });
      if (!licensed)
        throw Error(ErrorKind::License, f + ": over-the-air channel outside every licensed band", f + ".center_hz");
    } else if (ch.center_hz > max_center) {
      bad_spec(f + ".center_hz", "exceeds the emulator devices' maximum center frequency");
    }
  }

  if (r.n_usrps > 0 && static_cast<double>(r.n_usrps) > pool_devices(inv, r.path))
    throw Error(ErrorKind::Capacity, "more USRPs than the " + std::string(to_string(r.path)) + " pool holds",
                "devices");
  for (const auto& ch : r.channels)
    if (ch.bw_hz > std::min(kDefaultBlockCapHz, max_node_bw))
      throw Error(ErrorKind::Capacity, "channel wider than any node's spectrum block", "spectrum");
  const auto totals = inventory_totals(inv);
  if (c.cpu_cores > totals.cores || c.ram_gb > totals.ram_gb || c.storage_gb > totals.storage_gb ||
      !compute_feasible(inv, {&c}))
    throw Error(ErrorKind::Capacity, "compute request exceeds the cluster", "compute");
  if (spec.network.requested_bps > totals.network_bps)
    throw Error(ErrorKind::Capacity, "network request exceeds the fabric", "network");
}

std::vector<Conflict> detect_conflicts(const Reservation& cand, const Calendar& calendar, const Inventory& inv) {
  std::vector<const Reservation*> others;
  for (const auto& [id, r] : calendar) {
    if (id == cand.id || is_terminal(r.state) || !r.window.overlaps(cand.window)) continue;
    others.push_back(&r);
  }
  std::vector<Conflict> out;
  if (others.empty()) return out;

  std::set<std::string> spectrum_ids;
  for (const auto* o : others) {
    if (o->spec.radio.path != cand.spec.radio.path) continue;
    for (const auto& a : cand.spec.radio.channels) {
      for (const auto& b : o->spec.radio.channels) {
        if (a.overlaps(b)) spectrum_ids.insert(o->id);
      }
    }
  }

  std::vector<Timestamp> points{cand.window.start_utc, cand.window.end_utc};
  for (const auto* o : others) {
    for (Timestamp t : {o->window.start_utc, o->window.end_utc})
      if (t > cand.window.start_utc && t < cand.window.end_utc) points.push_back(t);
  }
  std::sort(points.begin(), points.end());
  points.erase(std::unique(points.begin(), points.end()), points.end());

  const auto totals = inventory_totals(inv);
  const RadioPath path = cand.spec.radio.path;
  const double pool = pool_devices(inv, path);
  std::set<std::string> device_ids, compute_ids, network_ids;
  for (std::size_t i = 0; i + 1 < points.size(); ++i) {
    const Timestamp t = points[i];
    std::vector<const Reservation*> active;
    for (const auto* o : others)
      if (o->window.start_utc <= t && o->window.end_utc > t) active.push_back(o);
    if (active.empty()) continue;

    if (cand.spec.radio.n_usrps > 0) {
      double sum = cand.spec.radio.n_usrps;
      for (const auto* o : active)
        if (o->spec.radio.path == path) sum += o->spec.radio.n_usrps;
      if (sum > pool) {
        for (const auto* o : active)
          if (o->spec.radio.path == path && o->spec.radio.n_usrps > 0) device_ids.insert(o->id);
      }
    }
    if (cand.spec.network.requested_bps > 0) {
      double sum = cand.spec.network.requested_bps;
      for (const auto* o : active) sum += o->spec.network.requested_bps;
      if (sum > totals.network_bps) {
        for (const auto* o : active)
          if (o->spec.network.requested_bps > 0) network_ids.insert(o->id);
      }
    }
    if (!cand.spec.compute.empty()) {
      std::vector<const ComputeRequest*> reqs{&cand.spec.compute};
      for (const auto* o : active)
        if (!o->spec.compute.empty()) reqs.push_back(&o->spec.compute);
      if (reqs.size() > 1 && !compute_feasible(inv, reqs)) {
        for (const auto* o : active)
          if (!o->spec.compute.empty()) compute_ids.insert(o->id);
      }
    }
  }

  auto emit = [&](ConflictKind kind, const std::set<std::string>& ids, const char* detail) {
    if (!ids.empty()) out.push_back({kind, {ids.begin(), ids.end()}, detail});
  };
  emit(ConflictKind::Devices, device_ids, "concurrent SDR demand exceeds the device pool");
  emit(ConflictKind::Spectrum, spectrum_ids, "overlapping channels on the same medium");
  emit(ConflictKind::Compute, compute_ids, "concurrent compute demand cannot be placed");
  emit(ConflictKind::Network, network_ids, "concurrent network demand exceeds the fabric");
  return out;
}

namespace {

const char* const kUtilizationClasses[] = {"sdr_over_the_air", "sdr_emulator", "cores",
                                           "ram_gb",           "storage_gb",   "network_bps"};

std::optional<std::pair<Timestamp, Timestamp>> hold_interval(const Reservation& r) {
  switch (r.state) {
    case ReservationState::Confirmed: return std::make_pair(r.window.start_utc, r.window.end_utc);
    case ReservationState::Active:
      if (r.activated_at) return std::make_pair(*r.activated_at, std::max(*r.activated_at, r.window.end_utc));
      return std::nullopt;
    case ReservationState::Completed:
      if (r.activated_at && r.completed_at) return std::make_pair(*r.activated_at, *r.completed_at);
      return std::nullopt;
    default: return std::nullopt;
  }
}

}  // namespace

std::vector<UtilizationBucket> utilization_report(const Calendar& calendar, const Inventory& inv, Timestamp from,
                                                  Timestamp to, std::int64_t bucket_s) {
  if (!(from < to) || bucket_s <= 0)
    throw Error(ErrorKind::Validation, "utilization range must satisfy from < to and bucket > 0", "range");
  const auto totals = inventory_totals(inv);
  const std::map<std::string, double> pool = {
      {"sdr_over_the_air", totals.sdr_over_the_air}, {"sdr_emulator", totals.sdr_emulator},
      {"cores", totals.cores},                       {"ram_gb", totals.ram_gb},
      {"storage_gb", totals.storage_gb},             {"network_bps", totals.network_bps}};
  std::vector<UtilizationBucket> out;
  for (Timestamp t = from; t < to; t += bucket_s) {
    UtilizationBucket b;
    b.start_utc = t;
    b.end_utc = std::min<Timestamp>(t + bucket_s, to);
    std::map<std::string, double> held;
    for (const char* k : kUtilizationClasses) held[k] = 0.0;
    for (const auto& [id, r] : calendar) {
      auto hold = hold_interval(r);
      if (!hold) continue;
      const double overlap =
          static_cast<double>(std::max<Timestamp>(0, std::min(hold->second, b.end_utc) - std::max(hold->first, t)));
      if (overlap <= 0) continue;
      const auto& s = r.spec;
      held[s.radio.path == RadioPath::OverTheAir ? "sdr_over_the_air" : "sdr_emulator"] += overlap * s.radio.n_usrps;
      held["cores"] += overlap * s.compute.cpu_cores;
      held["ram_gb"] += overlap * s.compute.ram_gb;
      held["storage_gb"] += overlap * s.compute.storage_gb;
      held["network_bps"] += overlap * s.network.requested_bps;
    }
    const double span = static_cast<double>(b.end_utc - b.start_utc);
    for (const char* k : kUtilizationClasses) {
      const double p = pool.at(k);
      b.occupancy[k] = p > 0 ? std::clamp(held[k] / (p * span), 0.0, 1.0) : 0.0;
    }
    out.push_back(std::move(b));
  }
  return out;
}

json to_json(const std::vector<UtilizationBucket>& report) {
  json out = json::array();
  for (const auto& b : report)
    out.push_back({{"start_utc", b.start_utc}, {"end_utc", b.end_utc}, {"occupancy", b.occupancy}});
  return out;
}

Scheduler::Scheduler(InventoryPtr inv, SchedulerConfig config)
    : inv_(std::move(inv)), config_(config), allocator_(inv_) {}

const Reservation& Scheduler::get(const std::string& id) const {
  auto it = calendar_.find(id);
  if (it == calendar_.end()) throw Error(ErrorKind::NotFound, "no reservation '" + id + "'", "id");
  return it->second;
}

Reservation& Scheduler::lookup(const std::string& id) {
  auto it = calendar_.find(id);
  if (it == calendar_.end()) throw Error(ErrorKind::NotFound, "no reservation '" + id + "'", "id");
  return it->second;
}

void Scheduler::transition(Reservation& r, ReservationState to, Timestamp now, const std::string& actor,
                           const std::string& note) {
  if (!transition_allowed(r.state, to))
    throw Error(ErrorKind::State, "illegal transition " + std::string(to_string(r.state)) + " -> " +
                                      std::string(to_string(to)) + " for " + r.id);
  r.audit.push_back({now, r.state, to, actor, note});
  r.state = to;
  if (listener_) listener_(r, r.audit.back());
}

void Scheduler::annotate(Reservation& r, Timestamp now, const std::string& actor, const std::string& note) {
  r.audit.push_back({now, r.state, r.state, actor, note});
}

void Scheduler::record(const std::string& op, Timestamp now, const std::string& actor, json args, json result) {
  if (replaying_) return;
  LogRecord rec{last_seq_ + 1, now, actor, op, std::move(args), std::move(result)};
  if (log_) log_->append(rec);
  last_seq_ = rec.seq;
}

void Scheduler::sweep(Timestamp now) {
  if (!replaying_) expire_tentative(now);
}

std::vector<std::string> Scheduler::expire_tentative(Timestamp now) {
  std::vector<std::string> expired;
  for (auto& [id, r] : calendar_) {
    if (r.state != ReservationState::Tentative || r.audit.empty()) continue;
    if (now - r.audit.front().t_utc < config_.tentative_ttl_s) continue;
    transition(r, ReservationState::Cancelled, now, "scheduler", "tentative hold expired");
    record("expire", now, "scheduler", {{"id", id}}, {{"state", "Cancelled"}});
    expired.push_back(id);
  }
  return expired;
}

const Reservation& Scheduler::request(const std::string& user, const TimeWindow& window, const ResourceSpec& spec,
                                      Timestamp now) {
  sweep(now);
  if (user.empty()) bad_spec("user", "must be non-empty");
  validate_request(spec, window, *inv_);
  char buf[32];
  std::snprintf(buf, sizeof buf, "res-%06llu", static_cast<unsigned long long>(next_id_));
  Reservation r;
  r.id = buf;
  r.user = user;
  r.window = window;
  r.spec = spec;
  auto [it, inserted] = calendar_.emplace(r.id, std::move(r));
  ++next_id_;
  transition(it->second, ReservationState::Tentative, now, user, "tentative hold");
  record("request", now, user, {{"user", user}, {"window", {{"start_utc", window.start_utc}, {"end_utc", window.end_utc}}},
                                {"spec", to_json(spec)}},
         {{"id", it->first}, {"state", "Tentative"}});
  return it->second;
}

AdmissionResult Scheduler::evaluate(const std::string& id, Timestamp now, const std::string& actor) {
  sweep(now);
  Reservation& r = lookup(id);
  if (r.state != ReservationState::Tentative)
    throw Error(ErrorKind::State, id + " is " + std::string(to_string(r.state)) + ", evaluation requires Tentative");
  auto conflicts = detect_conflicts(r, calendar_, *inv_);
  if (!conflicts.empty()) {
    std::string note = "conflict:";
    for (const auto& c : conflicts) note += " " + std::string(to_string(c.kind));
    transition(r, ReservationState::Denied, now, actor, note);
  } else {
    const auto totals = inventory_totals(*inv_);
    const double f = config_.auto_approve_fraction;
    const auto& s = r.spec;
    const double pool = pool_devices(*inv_, s.radio.path);
    auto within = [&](double want, double total) { return want <= 0 || (total > 0 && want <= f * total); };
    const bool small = r.window.duration() <= config_.auto_approve_max_s && within(s.radio.n_usrps, pool) &&
                       within(s.compute.cpu_cores, totals.cores) && within(s.compute.ram_gb, totals.ram_gb) &&
                       within(s.compute.storage_gb, totals.storage_gb) &&
                       within(s.network.requested_bps, totals.network_bps);
    if (small)
      transition(r, ReservationState::Confirmed, now, actor, "auto-approved");
    else
      transition(r, ReservationState::PendingReview, now, actor, "exceeds auto-approval thresholds");
  }
  record("evaluate", now, actor, {{"id", id}}, {{"state", std::string(to_string(r.state))}});
  return {r, std::move(conflicts)};
}

const Reservation& Scheduler::review(const std::string& id, const std::string& admin, bool approve, Timestamp now) {
  sweep(now);
  Reservation& r = lookup(id);
  if (r.state != ReservationState::PendingReview)
    throw Error(ErrorKind::State, id + " is " + std::string(to_string(r.state)) + ", review requires PendingReview");
  transition(r, approve ? ReservationState::Confirmed : ReservationState::Denied, now, admin,
             approve ? "approved by " + admin : "rejected by " + admin);
  record("review", now, admin, {{"id", id}, {"approve", approve}}, {{"state", std::string(to_string(r.state))}});
  return r;
}

const Reservation& Scheduler::activate(const std::string& id, Timestamp now, const std::string& actor) {
  sweep(now);
  Reservation& r = lookup(id);
  if (r.state != ReservationState::Confirmed)
    throw Error(ErrorKind::State, id + " is " + std::string(to_string(r.state)) + ", activation requires Confirmed");
  if (!r.window.contains(now))
    throw Error(ErrorKind::State, id + " can only be activated within its window");
  try {
    allocator_.bind(r);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Allocation) throw;
    annotate(r, now, actor, std::string("activation failed: ") + e.what());
    record("activate", now, actor, {{"id", id}},
           {{"state", "Confirmed"}, {"error", std::string(e.name())}, {"field", e.field()}});
    throw;
  }
  r.activated_at = now;
  transition(r, ReservationState::Active, now, actor, "resources bound");
  record("activate", now, actor, {{"id", id}}, {{"state", "Active"}});
  return r;
}

std::pair<Reservation, SurveyForm> Scheduler::complete(const std::string& id, Timestamp now, const std::string& actor) {
  sweep(now);
  Reservation& r = lookup(id);
  if (r.state != ReservationState::Active)
    throw Error(ErrorKind::State, id + " is " + std::string(to_string(r.state)) + ", completion requires Active");
  if (now < *r.activated_at) throw Error(ErrorKind::State, id + " cannot complete before it was activated");
  std::string held;
  if (const auto* a = allocator_.find(id)) held = to_json(*a).dump();
  allocator_.release(id);
  r.completed_at = now;
  ledger_[id] = {r.window.duration(), now - *r.activated_at, held};
  SurveyForm survey = make_survey(id);
  r.survey = survey;
  surveys_.push_back(survey);
  transition(r, ReservationState::Completed, now, actor, "session complete");
  record("complete", now, actor, {{"id", id}}, {{"state", "Completed"}});
  return {r, survey};
}

const Reservation& Scheduler::cancel(const std::string& id, Timestamp now, const std::string& actor) {
  sweep(now);
  Reservation& r = lookup(id);
  if (is_terminal(r.state))
    throw Error(ErrorKind::State, id + " is " + std::string(to_string(r.state)) + " and cannot be cancelled");
  if (r.state == ReservationState::Active) allocator_.release(id);
  transition(r, ReservationState::Cancelled, now, actor, "cancelled by " + actor);
  record("cancel", now, actor, {{"id", id}}, {{"state", "Cancelled"}});
  return r;
}

const Reservation& Scheduler::submit_survey(const std::string& id, const std::vector<std::string>& responses,
                                            Timestamp now, const std::string& actor) {
  Reservation& r = lookup(id);
  if (r.state != ReservationState::Completed || !r.survey)
    throw Error(ErrorKind::State, id + " has no survey to answer");
  if (r.survey->responses) throw Error(ErrorKind::State, id + " survey already answered");
  if (responses.size() != r.survey->questions.size())
    throw Error(ErrorKind::Validation, "expected one response per survey question", "responses");
  r.survey->responses = responses;
  for (auto& s : surveys_)
    if (s.reservation_id == id) s.responses = responses;
  annotate(r, now, actor, "survey answered");
  record("survey", now, actor, {{"id", id}, {"responses", responses}}, {{"state", "Completed"}});
  return r;
}

void Scheduler::reload_inventory(InventoryPtr inv, Timestamp now, const std::string& actor) {
  allocator_.reset_inventory(inv);
  inv_ = std::move(inv);
  record("reload_inventory", now, actor, {{"inventory", to_json(*inv_)}}, {{"hash", inventory_hash(*inv_)}});
}

void Scheduler::apply(const LogRecord& rec) {
  const auto& a = rec.args;
  std::string state;
  if (rec.op == "request") {
    const auto& r = request(a.at("user").get<std::string>(),
                            {a.at("window").at("start_utc").get<Timestamp>(), a.at("window").at("end_utc").get<Timestamp>()},
                            resource_spec_from_json(a.at("spec")), rec.t_utc);
    if (r.id != rec.result.at("id").get<std::string>())
      throw Error(ErrorKind::Recovery, "replay diverged at seq " + std::to_string(rec.seq) + ": id mismatch");
    state = to_string(r.state);
  } else if (rec.op == "evaluate") {
    state = to_string(evaluate(a.at("id").get<std::string>(), rec.t_utc, rec.actor).reservation.state);
  } else if (rec.op == "review") {
    state = to_string(review(a.at("id").get<std::string>(), rec.actor, a.at("approve").get<bool>(), rec.t_utc).state);
  } else if (rec.op == "activate") {
    try {
      state = to_string(activate(a.at("id").get<std::string>(), rec.t_utc, rec.actor).state);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Allocation || !rec.result.contains("error")) throw;
      state = to_string(get(a.at("id").get<std::string>()).state);
    }
  } else if (rec.op == "complete") {
    state = to_string(complete(a.at("id").get<std::string>(), rec.t_utc, rec.actor).first.state);
  } else if (rec.op == "cancel") {
    state = to_string(cancel(a.at("id").get<std::string>(), rec.t_utc, rec.actor).state);
  } else if (rec.op == "survey") {
    state = to_string(
        submit_survey(a.at("id").get<std::string>(), a.at("responses").get<std::vector<std::string>>(), rec.t_utc, rec.actor)
            .state);
  } else if (rec.op == "expire") {
    Reservation& r = lookup(a.at("id").get<std::string>());
    transition(r, ReservationState::Cancelled, rec.t_utc, "scheduler", "tentative hold expired");
    state = to_string(r.state);
  } else if (rec.op == "reload_inventory") {
    reload_inventory(std::make_shared<const Inventory>(inventory_from_json(a.at("inventory"))), rec.t_utc, rec.actor);
    return;
  } else {
    throw Error(ErrorKind::Recovery, "unknown op '" + rec.op + "' at seq " + std::to_string(rec.seq));
  }
  if (rec.result.contains("state") && rec.result.at("state").get<std::string>() != state)
    throw Error(ErrorKind::Recovery, "replay diverged at seq " + std::to_string(rec.seq) + ": expected " +
                                         rec.result.at("state").get<std::string>() + ", got " + state);
}

void Scheduler::replay(const std::vector<LogRecord>& records) {
  replaying_ = true;
  try {
    for (const auto& rec : records) {
      if (rec.seq != last_seq_ + 1)
        throw Error(ErrorKind::Recovery, "event log sequence gap before seq " + std::to_string(rec.seq));
      try {
        apply(rec);
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::Recovery) throw;
        throw Error(ErrorKind::Recovery,
                    "replay failed at seq " + std::to_string(rec.seq) + " (" + rec.op + "): " + e.what());
      } catch (const json::exception& e) {
        throw Error(ErrorKind::Recovery, "malformed record at seq " + std::to_string(rec.seq) + ": " + e.what());
      }
      last_seq_ = rec.seq;
    }
  } catch (...) {
    replaying_ = false;
    throw;
  }
  replaying_ = false;
}

json Scheduler::snapshot() const {
  json reservations = json::array();
  for (const auto& [id, r] : calendar_) reservations.push_back(to_json(r));
  json ledger = json::object();
  for (const auto& [id, u] : ledger_) ledger[id] = to_json(u);
  json surveys = json::array();
  for (const auto& s : surveys_) surveys.push_back(to_json(s));
  json allocations = json::array();
  for (const auto& [id, a] : allocator_.live()) allocations.push_back(to_json(a));
  json blocks = json::array();
  for (const auto& [node, b] : allocator_.blocks()) blocks.push_back(to_json(b));
  return {{"last_seq", last_seq_},
          {"next_id", next_id_},
          {"inventory_hash", inventory_hash(*inv_)},
          {"reservations", reservations},
          {"ledger", ledger},
          {"surveys", surveys},
          {"allocations", allocations},
          {"blocks", blocks}};
}

}  // namespace sdrbed
