#include "sdrbed/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <limits>
#include <numbers>

#include "json_util.hpp"
#include "sdrbed/allocator.hpp"
#include "sdrbed/specvirt.hpp"

namespace sdrbed {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(Role r) { return r == Role::Admin ? "Admin" : "User"; }

std::string_view to_string(NodeState s) {
  switch (s) {
    case NodeState::Idle: return "Idle";
    case NodeState::Reserved: return "Reserved";
    case NodeState::Active: return "Active";
    case NodeState::Fault: return "Fault";
  }
  return "Idle";
}

json to_json(const NodeStatusEvent& e) {
  json j = {{"id", e.id}, {"node_id", e.node_id}, {"state", std::string(to_string(e.state))}, {"t_utc", e.t_utc}};
  j["owner"] = e.owner ? json(*e.owner) : json(nullptr);
  return j;
}

Timestamp system_clock_now() { return static_cast<Timestamp>(std::time(nullptr)); }

GatewayConfig gateway_config_from_json(const json& j, const std::string& base_dir) {
  const std::string path = "config";
  GatewayConfig c;
  auto resolve = [&](const std::string& p) {
    if (p.empty() || fs::path(p).is_absolute()) return p;
    return (fs::path(base_dir) / p).string();
  };
  c.bind_address = detail::get_or<std::string>(j, "bind_address", c.bind_address, path);
  c.port = detail::get_or<int>(j, "port", c.port, path);
  c.state_dir = resolve(detail::get_or<std::string>(j, "state_dir", c.state_dir, path));
  c.inventory_path = resolve(detail::get_or<std::string>(j, "inventory_path", "", path));
  c.fsync = detail::get_or<bool>(j, "fsync", c.fsync, path);
  for (const auto& t : detail::get_array(j, "tokens", path)) {
    ApiSession s;
    s.token = detail::get_required<std::string>(t, "token", path + ".tokens");
    s.user = detail::get_required<std::string>(t, "user", path + ".tokens");
    const auto role = detail::get_or<std::string>(t, "role", "User", path + ".tokens");
    if (role != "User" && role != "Admin")
      throw Error(ErrorKind::Validation, "role must be User or Admin", path + ".tokens.role");
    s.role = role == "Admin" ? Role::Admin : Role::User;
    c.tokens[s.token] = s;
  }
  if (j.contains("scheduler")) {
    const auto& s = j.at("scheduler");
    c.scheduler.auto_approve_max_s =
        detail::get_or<std::int64_t>(s, "auto_approve_max_s", c.scheduler.auto_approve_max_s, path + ".scheduler");
    c.scheduler.auto_approve_fraction =
        detail::get_or<double>(s, "auto_approve_fraction", c.scheduler.auto_approve_fraction, path + ".scheduler");
    c.scheduler.tentative_ttl_s =
        detail::get_or<std::int64_t>(s, "tentative_ttl_s", c.scheduler.tentative_ttl_s, path + ".scheduler");
  }
  if (c.port < 0 || c.port > 65535) throw Error(ErrorKind::Validation, "port out of range", path + ".port");
  return c;
}

GatewayConfig load_gateway_config(const std::string& path) {
  const auto dir = fs::path(path).parent_path().string();
  return gateway_config_from_json(detail::parse_document(detail::read_file(path)), dir.empty() ? "." : dir);
}

namespace {

InventoryPtr load_configured_inventory(const GatewayConfig& c) {
  if (c.inventory_path.empty()) return std::make_shared<const Inventory>(default_inventory());
  return std::make_shared<const Inventory>(load_inventory_file(c.inventory_path));
}

Timestamp utc_field(const json& body, const char* key) {
  const auto& v = body.at(key);
  if (v.is_number_integer()) return v.get<Timestamp>();
  if (v.is_string()) return parse_utc(v.get<std::string>());
  throw Error(ErrorKind::Validation, std::string(key) + " must be a UTC timestamp", key);
}

double power_dbm(std::span<const Complex> x) {
  if (x.empty()) return kEvmFloorDb;
  double sum = 0.0;
  for (const auto& v : x) sum += std::norm(v);
  const double mean = sum / static_cast<double>(x.size());
  return mean > 0 ? std::max(kEvmFloorDb, 10.0 * std::log10(mean)) : kEvmFloorDb;
}

std::vector<Complex> tone(double f_hz, double rate_sps, double p_dbm, std::size_t n) {
  const double amp = std::sqrt(std::pow(10.0, p_dbm / 10.0));
  std::vector<Complex> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = std::polar(amp, 2.0 * std::numbers::pi * f_hz * static_cast<double>(i) / rate_sps);
  return out;
}

}  // namespace

Orchestrator::Orchestrator(GatewayConfig config, Clock clock) : config_(std::move(config)), clock_(std::move(clock)) {
  std::error_code ec;
  fs::create_directories(config_.state_dir, ec);
  if (ec) throw Error(ErrorKind::Recovery, "cannot create state dir " + config_.state_dir + ": " + ec.message());
  scheduler_ = std::make_unique<Scheduler>(load_configured_inventory(config_), config_.scheduler);
  const auto log_path = (fs::path(config_.state_dir) / "events.jsonl").string();
  scheduler_->replay(EventLog::read_all(log_path));
  log_ = std::make_unique<EventLog>(log_path, config_.fsync);
  scheduler_->attach_log(log_.get());
  store_ = std::make_unique<ExperimentStore>((fs::path(config_.state_dir) / "experiments").string(), config_.fsync);
  const auto scenario_path = fs::path(config_.state_dir) / "scenario.json";
  if (fs::exists(scenario_path)) {
    try {
      scenario_ = load_scenario_file(scenario_path.string());
    } catch (const Error& e) {
      throw Error(ErrorKind::Recovery, "cannot restore " + scenario_path.string() + ": " + e.what());
    }
  }
  persist_snapshot();

  const Timestamp now = clock_();
  for (const auto& [id, alloc] : scheduler_->allocator().live()) active_nodes_[id] = radio_nodes_of(id);
  std::set<std::string> nodes;
  for (const auto& d : scheduler_->inventory().sdr_devices) nodes.insert(d.node_id);
  for (const auto& node : nodes) {
    std::optional<std::string> owner;
    for (const auto& [id, held] : active_nodes_)
      if (std::find(held.begin(), held.end(), node) != held.end()) owner = id;
    emit(node, owner ? NodeState::Active : NodeState::Idle, now, owner);
  }
  scheduler_->set_listener([this](const Reservation& r, const AuditEntry& a) { on_transition(r, a); });
}

Orchestrator::~Orchestrator() { close_events(); }

ApiSession Orchestrator::authenticate(const std::string& token, bool need_admin) const {
  if (token.empty()) throw Error(ErrorKind::Unauthorized, "missing API token", "token");
  auto it = config_.tokens.find(token);
  if (it == config_.tokens.end()) throw Error(ErrorKind::Unauthorized, "unknown API token", "token");
  if (need_admin && it->second.role != Role::Admin)
    throw Error(ErrorKind::Forbidden, "this operation requires the Admin role", "role");
  return it->second;
}

void Orchestrator::persist_snapshot() {
  detail::write_file_atomic((fs::path(config_.state_dir) / "snapshot.json").string(),
                            scheduler_->snapshot().dump(2) + "\n");
}

template <typename F>
json Orchestrator::mutate(F&& f) {
  std::unique_lock lock(mutex_);
  const auto before = scheduler_->last_seq();
  try {
    json out = f();
    if (scheduler_->last_seq() != before) persist_snapshot();
    return out;
  } catch (...) {
    if (scheduler_->last_seq() != before) persist_snapshot();
    throw;
  }
}

std::vector<std::string> Orchestrator::radio_nodes_of(const std::string& reservation_id) const {
  std::vector<std::string> nodes;
  const auto* alloc = scheduler_->allocator().find(reservation_id);
  if (!alloc) return nodes;
  for (const auto& dev : alloc->devices) {
    const auto* d = scheduler_->inventory().find_device(dev);
    if (d && std::find(nodes.begin(), nodes.end(), d->node_id) == nodes.end()) nodes.push_back(d->node_id);
  }
  return nodes;
}

void Orchestrator::on_transition(const Reservation& r, const AuditEntry& a) {
  if (a.from == a.to) return;
  if (a.to == ReservationState::Active) {
    auto nodes = radio_nodes_of(r.id);
    for (const auto& n : nodes) emit(n, NodeState::Active, a.t_utc, r.id);
    active_nodes_[r.id] = std::move(nodes);
  } else if (a.from == ReservationState::Active) {
    auto it = active_nodes_.find(r.id);
    if (it == active_nodes_.end()) return;
    for (const auto& n : it->second) emit(n, NodeState::Idle, a.t_utc, std::nullopt);
    active_nodes_.erase(it);
  }
}

void Orchestrator::emit(const std::string& node_id, NodeState state, Timestamp t, std::optional<std::string> owner) {
  {
    std::lock_guard lock(events_mutex_);
    auto& last = last_event_t_[node_id];
    t = std::max(t, last);
    last = t;
    events_.push_back({events_.size() + 1, node_id, state, t, std::move(owner)});
  }
  events_cv_.notify_all();
}

std::vector<NodeStatusEvent> Orchestrator::events_after(std::uint64_t after_id, std::chrono::milliseconds wait) const {
  std::unique_lock lock(events_mutex_);
  events_cv_.wait_for(lock, wait, [&] { return events_closed_ || events_.size() > after_id; });
  if (events_.size() <= after_id) return {};
  return {events_.begin() + static_cast<std::ptrdiff_t>(after_id), events_.end()};
}

std::uint64_t Orchestrator::last_event_id() const {
  std::lock_guard lock(events_mutex_);
  return events_.size();
}

void Orchestrator::close_events() {
  {
    std::lock_guard lock(events_mutex_);
    events_closed_ = true;
  }
  events_cv_.notify_all();
}

bool Orchestrator::events_closed() const {
  std::lock_guard lock(events_mutex_);
  return events_closed_;
}

json Orchestrator::inventory() const {
  std::shared_lock lock(mutex_);
  return to_json(scheduler_->inventory());
}

json Orchestrator::capacity() const {
  std::shared_lock lock(mutex_);
  return to_json(capacity_summary(scheduler_->inventory()));
}

json Orchestrator::create_reservation(const ApiSession& s, const json& body) {
  if (!body.is_object()) throw Error(ErrorKind::Validation, "body must be an object");
  if (!body.contains("start_utc")) throw Error(ErrorKind::Spec, "start_utc is required", "start_utc");
  const Timestamp start = utc_field(body, "start_utc");
  Timestamp end = 0;
  if (body.contains("end_utc")) {
    end = utc_field(body, "end_utc");
  } else if (body.contains("duration_s")) {
    end = start + detail::get_required<std::int64_t>(body, "duration_s", "body");
  } else {
    throw Error(ErrorKind::Spec, "end_utc or duration_s is required", "end_utc");
  }
  const ResourceSpec spec = resource_spec_from_json(body.value("spec", json::object()));
  return mutate([&] { return to_json(scheduler_->request(s.user, {start, end}, spec, clock_())); });
}

json Orchestrator::get_reservation(const std::string& id) const {
  std::shared_lock lock(mutex_);
  json j = to_json(scheduler_->get(id));
  if (const auto* a = scheduler_->allocator().find(id)) j["allocation"] = to_json(*a);
  return j;
}

json Orchestrator::schedule(std::optional<Timestamp> from, std::optional<Timestamp> to) const {
  std::shared_lock lock(mutex_);
  std::vector<const Reservation*> rows;
  for (const auto& [id, r] : scheduler_->calendar()) {
    if (from && r.window.end_utc <= *from) continue;
    if (to && r.window.start_utc >= *to) continue;
    rows.push_back(&r);
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const Reservation* a, const Reservation* b) { return a->window.start_utc < b->window.start_utc; });
  json out = json::array();
  for (const auto* r : rows) out.push_back(to_json(*r));
  return out;
}

json Orchestrator::evaluate(const ApiSession& s, const std::string& id) {
  return mutate([&] {
    const auto res = scheduler_->evaluate(id, clock_(), s.user);
    json conflicts = json::array();
    for (const auto& c : res.conflicts) conflicts.push_back(to_json(c));
    json out = {{"reservation", to_json(res.reservation)}, {"conflicts", conflicts}};
    if (res.reservation.state == ReservationState::Denied)
      throw DeniedError(id + " conflicts with existing reservations and was denied", out);
    return out;
  });
}

json Orchestrator::review(const ApiSession& s, const std::string& id, bool approve) {
  return mutate([&] { return to_json(scheduler_->review(id, s.user, approve, clock_())); });
}

json Orchestrator::activate(const ApiSession& s, const std::string& id) {
  return mutate([&] {
    json j = to_json(scheduler_->activate(id, clock_(), s.user));
    if (const auto* a = scheduler_->allocator().find(id)) j["allocation"] = to_json(*a);
    return j;
  });
}

json Orchestrator::complete(const ApiSession& s, const std::string& id) {
  return mutate([&] {
    auto [r, survey] = scheduler_->complete(id, clock_(), s.user);
    return json{{"reservation", to_json(r)}, {"survey", to_json(survey)}, {"usage", to_json(scheduler_->ledger().at(id))}};
  });
}

json Orchestrator::cancel(const ApiSession& s, const std::string& id) {
  return mutate([&] { return to_json(scheduler_->cancel(id, clock_(), s.user)); });
}

json Orchestrator::survey(const ApiSession& s, const std::string& id, const json& body) {
  const auto responses = detail::get_required<std::vector<std::string>>(body, "responses", "body");
  return mutate([&] { return to_json(*scheduler_->submit_survey(id, responses, clock_(), s.user).survey); });
}

json Orchestrator::utilization(Timestamp from, Timestamp to, std::int64_t bucket_s) const {
  std::shared_lock lock(mutex_);
  return to_json(utilization_report(scheduler_->calendar(), scheduler_->inventory(), from, to, bucket_s));
}

json Orchestrator::reload_inventory(const ApiSession& s) {
  auto inv = load_configured_inventory(config_);
  return mutate([&] {
    scheduler_->reload_inventory(inv, clock_(), s.user);
    return json{{"inventory_hash", inventory_hash(*inv)}, {"capacity", to_json(capacity_summary(*inv))}};
  });
}

json Orchestrator::put_scenario(const json& body) {
  ChannelScenario sc = scenario_from_json(body, config_.state_dir);
  const json doc = to_json(sc);
  std::unique_lock lock(mutex_);
  detail::write_file_atomic((fs::path(config_.state_dir) / "scenario.json").string(), doc.dump(2) + "\n");
  scenario_ = std::move(sc);
  return {{"scenario", doc}, {"scenario_hash", scenario_hash(*scenario_)}};
}

json Orchestrator::get_scenario() const {
  std::shared_lock lock(mutex_);
  if (!scenario_) throw Error(ErrorKind::NotFound, "no scenario has been set", "scenario");
  return {{"scenario", to_json(*scenario_)}, {"scenario_hash", scenario_hash(*scenario_)}};
}

json Orchestrator::run_emulation(const json& body) const {
  const std::string path = "body";
  const double duration = detail::get_required<double>(body, "duration_s", path);
  const double step = detail::get_required<double>(body, "step_s", path);
  const auto seed = detail::get_or<std::uint64_t>(body, "seed", 0, path);
  const auto length = detail::get_or<std::size_t>(body, "length", 4096, path);
  const auto res_id = detail::get_or<std::string>(body, "reservation_id", "", path);
  struct Tx {
    std::string radio_id;
    double tone_hz;
    double power_dbm;
  };
  std::vector<Tx> tx;
  for (const auto& t : detail::get_array(body, "tx", path))
    tx.push_back({detail::get_required<std::string>(t, "radio_id", path + ".tx"),
                  detail::get_or<double>(t, "tone_hz", 0.0, path + ".tx"),
                  detail::get_or<double>(t, "power_dbm", 0.0, path + ".tx")});
  if (length == 0) throw Error(ErrorKind::Validation, "length must be > 0", "length");

  std::shared_lock lock(mutex_);
  if (!scenario_) throw Error(ErrorKind::State, "no scenario has been set", "scenario");
  const ChannelScenario& sc = *scenario_;

  std::vector<TxStream> streams;
  std::vector<SpectrumSlot> slots;
  std::vector<std::vector<Complex>> references;  // slot-rate transmit signals
  std::vector<std::size_t> skips;                // filter edge per slot, in slot samples
  if (res_id.empty()) {
    const double rate = detail::get_or<double>(body, "rate_sps", 1e6, path);
    if (!(rate > 0)) throw Error(ErrorKind::Rate, "rate_sps must be > 0", "rate_sps");
    for (const auto& t : tx) {
      if (!(std::abs(t.tone_hz) < rate / 2)) throw Error(ErrorKind::Shift, "tone aliases at rate_sps", "tone_hz");
      streams.push_back({t.radio_id, {tone(t.tone_hz, rate, t.power_dbm, length), rate, 0.0}});
    }
  } else {
    const auto& r = scheduler_->get(res_id);
    if (r.state != ReservationState::Active)
      throw Error(ErrorKind::State, res_id + " is not Active", "reservation_id");
    const auto* alloc = scheduler_->allocator().find(res_id);
    if (!alloc || alloc->slots.size() < tx.size())
      throw Error(ErrorKind::Validation, "reservation has fewer spectrum slots than transmitters", "tx");
    double block_rate = 0;
    for (std::size_t i = 0; i < tx.size(); ++i) {
      const auto& binding = alloc->slots[i];
      const auto& block = scheduler_->allocator().blocks().at(binding.node_id);
      const auto& slot = binding.slot;
      if (block_rate != 0 && static_cast<double>(block.sample_rate_sps) != block_rate)
        throw Error(ErrorKind::Rate, "transmitting slots sit in blocks of different rates", "tx");
      block_rate = static_cast<double>(block.sample_rate_sps);
      const double slot_rate = static_cast<double>(slot.slot_rate_sps);
      if (!(std::abs(tx[i].tone_hz) < slot.bw_hz / 2))
        throw Error(ErrorKind::Validation, "tone lies outside the slot passband", "tone_hz");
      // `length` counts block-rate samples so that every lifted stream has the same size.
      const auto k = static_cast<std::size_t>(block.sample_rate_sps / slot.slot_rate_sps);
      const std::size_t n = length / k;
      const std::size_t edge = (design_lowpass(interpolation_filter(slot), block_rate).size() +
                                design_lowpass(default_slot_filter(slot), block_rate).size()) /
                                   (2 * k) +
                               2;
      if (2 * edge >= n) throw Error(ErrorKind::Validation, "length too short for the slot filters", "length");
      IqBuffer sig{tone(tx[i].tone_hz, slot_rate, tx[i].power_dbm, n), slot_rate, 0.0};
      references.push_back(sig.samples);
      slots.push_back(slot);
      skips.push_back(edge);
      auto lifted = aggregate({{sig, slot}}, block, length);
      lifted.samples.resize(length);
      streams.push_back({tx[i].radio_id, std::move(lifted)});
    }
  }

  const auto timeline = run_timeline(sc, duration, step, streams, seed);
  json steps = json::array();
  for (const auto& st : timeline) {
    json rx = json::object();
    for (const auto& [rx_id, buf] : st.rx) {
      json entry = {{"power_dbm", power_dbm(buf.samples)}};
      if (!slots.empty()) {
        json per_slot = json::array();
        for (std::size_t i = 0; i < slots.size(); ++i) {
          if (tx[i].radio_id == rx_id) continue;
          const double a_db = st.matrix.a_db[st.matrix.index_of(tx[i].radio_id)][st.matrix.index_of(rx_id)];
          const auto got = disaggregate(buf, slots[i], default_slot_filter(slots[i]));
          const double g = std::pow(10.0, -a_db / 20.0);
          const std::size_t n = std::min(got.size(), references[i].size());
          const std::size_t skip = skips[i];
          std::vector<Complex> expect(references[i].begin() + static_cast<std::ptrdiff_t>(skip),
                                      references[i].begin() + static_cast<std::ptrdiff_t>(n - skip));
          for (auto& v : expect) v *= g;
          const std::span<const Complex> measured(got.samples.data() + skip, n - 2 * skip);
          per_slot.push_back({{"tx_radio", tx[i].radio_id},
                              {"slot_offset_hz", slots[i].offset_hz},
                              {"slot_bw_hz", slots[i].bw_hz},
                              {"attenuation_db", a_db},
                              {"expected_dbm", tx[i].power_dbm - a_db},
                              {"power_dbm", power_dbm(measured)},
                              {"evm_dbc", evm_dbc(expect, measured)}});
        }
        entry["slots"] = per_slot;
      }
      rx[rx_id] = entry;
    }
    json positions = json::object();
    for (const auto& [id, p] : positions_at(sc, st.t_s)) positions[id] = p;
    steps.push_back({{"t_s", st.t_s}, {"matrix", to_json(st.matrix)}, {"positions_m", positions}, {"rx", rx}});
  }
  return {{"scenario_hash", scenario_hash(sc)}, {"seed", seed}, {"steps", steps}};
}

json Orchestrator::open_experiment(const ApiSession&, const json& body) {
  const auto res_id = detail::get_required<std::string>(body, "reservation_id", "body");
  std::vector<std::string> formats;
  for (const auto& f : detail::get_or<std::vector<std::string>>(body, "sample_formats", {}, "body"))
    formats.emplace_back(to_string(sample_format_from_string(f)));
  std::shared_lock lock(mutex_);
  const auto& r = scheduler_->get(res_id);
  auto snap = make_config_snapshot(scheduler_->inventory(), r, scenario_ ? &*scenario_ : nullptr, formats, clock_());
  return to_json(store_->open_experiment(r, snap));
}

json Orchestrator::append_records(const std::string& experiment_id, const json& body) {
  std::vector<ExperimentRecord> records;
  if (body.is_object() && body.contains("records")) {
    for (const auto& r : detail::get_array(body, "records", "body")) records.push_back(experiment_record_from_json(r));
  } else {
    records.push_back(experiment_record_from_json(body));
  }
  store_->append_batch(experiment_id, records);
  return {{"appended", records.size()}, {"record_count", store_->info(experiment_id).record_count}};
}

json Orchestrator::query_records(const std::string& experiment_id, const RecordFilter& filter) const {
  json out = json::array();
  for (const auto& r : store_->query(experiment_id, filter)) out.push_back(to_json(r));
  return {{"experiment_id", experiment_id}, {"records", out}};
}

json Orchestrator::seal_experiment(const std::string& experiment_id) {
  const auto digest = store_->seal(experiment_id);
  return {{"experiment_id", experiment_id}, {"digest", digest}, {"algorithm", "sha256"}};
}

json Orchestrator::experiment(const std::string& experiment_id) const { return to_json(store_->info(experiment_id)); }

json Orchestrator::experiments() const {
  json out = json::array();
  for (const auto& a : store_->list()) out.push_back(to_json(a));
  return out;
}

json Orchestrator::state_snapshot() const {
  std::shared_lock lock(mutex_);
  return scheduler_->snapshot();
}

}  // namespace sdrbed
