#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "sdrbed/chanem.hpp"
#include "sdrbed/datamgr.hpp"
#include "sdrbed/error.hpp"
#include "sdrbed/event_log.hpp"
#include "sdrbed/scheduler.hpp"

namespace httplib {
class Server;
}

namespace sdrbed {

/// Conflict raised when evaluation denies a reservation. The payload holds
/// the reservation and the conflicts found.
class DeniedError : public Error {
 public:
  DeniedError(std::string message, nlohmann::json payload)
      : Error(ErrorKind::Conflict, std::move(message), "reservation"), payload_(std::move(payload)) {}
  const nlohmann::json& payload() const { return payload_; }

 private:
  nlohmann::json payload_;
};

enum class Role { User, Admin };
std::string_view to_string(Role r);

struct ApiSession {
  std::string token;
  std::string user;
  Role role = Role::User;
};

struct GatewayConfig {
  std::string bind_address = "127.0.0.1";
  int port = 8080;  ///< 0 picks a free port
  std::string state_dir = "sdrbed-state";
  std::string inventory_path;  ///< empty: built-in default inventory
  std::map<std::string, ApiSession> tokens;
  SchedulerConfig scheduler;
  bool fsync = true;
};

/// Config document; relative paths resolve against `base_dir`.
GatewayConfig gateway_config_from_json(const nlohmann::json& j, const std::string& base_dir = ".");
GatewayConfig load_gateway_config(const std::string& path);

enum class NodeState { Idle, Reserved, Active, Fault };
std::string_view to_string(NodeState s);

struct NodeStatusEvent {
  std::uint64_t id = 0;
  std::string node_id;
  NodeState state = NodeState::Idle;
  Timestamp t_utc = 0;
  std::optional<std::string> owner;

  bool operator==(const NodeStatusEvent&) const = default;
};

nlohmann::json to_json(const NodeStatusEvent& e);

using Clock = std::function<Timestamp()>;
Timestamp system_clock_now();

/// The engines behind one state directory:
///
///   <state_dir>/events.jsonl    scheduler event log (replayed on start)
///   <state_dir>/snapshot.json   derived scheduler state, rewritten after each mutation
///   <state_dir>/scenario.json   current channel scenario, if any
///   <state_dir>/experiments/    experiment store
///
/// Every method is safe to call from concurrent request threads. Mutations
/// are serialized; reads share a lock.
class Orchestrator {
 public:
  /// Throws Error(Recovery) when the event log cannot be replayed.
  explicit Orchestrator(GatewayConfig config, Clock clock = system_clock_now);
  ~Orchestrator();

  /// Throws Error(Unauthorized) for a missing or unknown token and
  /// Error(Forbidden) when `need_admin` and the session is not Admin.
  ApiSession authenticate(const std::string& token, bool need_admin = false) const;

  nlohmann::json inventory() const;
  nlohmann::json capacity() const;
  nlohmann::json create_reservation(const ApiSession& s, const nlohmann::json& body);
  nlohmann::json get_reservation(const std::string& id) const;
  nlohmann::json schedule(std::optional<Timestamp> from, std::optional<Timestamp> to) const;
  /// A Denied outcome throws DeniedError after the state change is
  /// persisted.
  nlohmann::json evaluate(const ApiSession& s, const std::string& id);
  nlohmann::json review(const ApiSession& s, const std::string& id, bool approve);
  nlohmann::json activate(const ApiSession& s, const std::string& id);
  nlohmann::json complete(const ApiSession& s, const std::string& id);
  nlohmann::json cancel(const ApiSession& s, const std::string& id);
  nlohmann::json survey(const ApiSession& s, const std::string& id, const nlohmann::json& body);
  nlohmann::json utilization(Timestamp from, Timestamp to, std::int64_t bucket_s) const;
  nlohmann::json reload_inventory(const ApiSession& s);

  nlohmann::json put_scenario(const nlohmann::json& body);
  nlohmann::json get_scenario() const;
  nlohmann::json run_emulation(const nlohmann::json& body) const;

  nlohmann::json open_experiment(const ApiSession& s, const nlohmann::json& body);
  nlohmann::json append_records(const std::string& experiment_id, const nlohmann::json& body);
  nlohmann::json query_records(const std::string& experiment_id, const RecordFilter& filter) const;
  nlohmann::json seal_experiment(const std::string& experiment_id);
  nlohmann::json experiment(const std::string& experiment_id) const;
  nlohmann::json experiments() const;

  /// Events with id > after_id, waiting up to `wait` for at least one.
  std::vector<NodeStatusEvent> events_after(std::uint64_t after_id, std::chrono::milliseconds wait) const;
  std::uint64_t last_event_id() const;
  /// Wakes every waiting event reader; used at shutdown.
  void close_events();
  bool events_closed() const;

  /// Derived scheduler state document.
  nlohmann::json state_snapshot() const;
  const GatewayConfig& config() const { return config_; }

 private:
  void persist_snapshot();
  void on_transition(const Reservation& r, const AuditEntry& a);
  void emit(const std::string& node_id, NodeState state, Timestamp t, std::optional<std::string> owner);
  std::vector<std::string> radio_nodes_of(const std::string& reservation_id) const;
  template <typename F>
  nlohmann::json mutate(F&& f);

  GatewayConfig config_;
  Clock clock_;
  mutable std::shared_mutex mutex_;
  std::unique_ptr<Scheduler> scheduler_;
  std::unique_ptr<EventLog> log_;
  std::unique_ptr<ExperimentStore> store_;
  std::optional<ChannelScenario> scenario_;
  std::map<std::string, std::vector<std::string>> active_nodes_;  ///< reservation id -> radio nodes

  mutable std::mutex events_mutex_;
  mutable std::condition_variable events_cv_;
  std::vector<NodeStatusEvent> events_;
  std::map<std::string, Timestamp> last_event_t_;
  bool events_closed_ = false;
};

/// HTTP front end over an Orchestrator. Error responses have the body
/// {"error": <domain error name>, "message": ..., "field": ...} and the
/// status from http_status().
class GatewayServer {
 public:
  explicit GatewayServer(Orchestrator& orchestrator);
  ~GatewayServer();

  /// Binds and serves on a background thread. Throws Error(Bind).
  void start();
  /// Blocks until the server has stopped.
  void wait();
  /// Asks the server to stop without waiting; safe from any thread.
  void request_stop();
  /// request_stop() followed by wait().
  void stop();
  int port() const { return port_; }

 private:
  void routes();

  Orchestrator& orch_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace sdrbed
