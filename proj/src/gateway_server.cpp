#include <httplib.h>

#include <limits>

#include "json_util.hpp"
#include "sdrbed/gateway.hpp"

namespace sdrbed {

using nlohmann::json;

namespace {

constexpr const char* kJson = "application/json";

std::string token_of(const httplib::Request& req) {
  const auto auth = req.get_header_value("Authorization");
  const std::string bearer = "Bearer ";
  if (auth.rfind(bearer, 0) == 0) return auth.substr(bearer.size());
  if (req.has_param("token")) return req.get_param_value("token");
  return {};
}

json body_of(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  return detail::parse_document(req.body);
}

std::optional<Timestamp> utc_param(const httplib::Request& req, const char* key) {
  if (!req.has_param(key)) return std::nullopt;
  return parse_utc(req.get_param_value(key));
}

double double_param(const httplib::Request& req, const char* key, double fallback) {
  if (!req.has_param(key)) return fallback;
  const auto text = req.get_param_value(key);
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::Validation, std::string(key) + " must be a number", key);
  }
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), kJson);
}

void send_error(httplib::Response& res, const Error& e) {
  json body = {{"error", std::string(e.name())}, {"message", e.what()}, {"field", e.field()}};
  if (const auto* d = dynamic_cast<const DeniedError*>(&e)) body.update(d->payload());
  send_json(res, http_status(e.kind()), body);
}

enum class Auth { Any, Admin };

}  // namespace

GatewayServer::GatewayServer(Orchestrator& orchestrator)
    : orch_(orchestrator), server_(std::make_unique<httplib::Server>()) {
  // Exclusive port: a second gateway on the same port must fail to bind.
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  routes();
}

GatewayServer::~GatewayServer() { stop(); }

void GatewayServer::routes() {
  using Handler = std::function<json(const httplib::Request&, const ApiSession&)>;
  auto wrap = [this](Auth auth, int ok, Handler h) {
    return [this, auth, ok, h](const httplib::Request& req, httplib::Response& res) {
      try {
        const ApiSession session = orch_.authenticate(token_of(req), auth == Auth::Admin);
        send_json(res, ok, h(req, session));
      } catch (const Error& e) {
        send_error(res, e);
      } catch (const json::exception& e) {
        send_error(res, Error(ErrorKind::Validation, std::string("bad request body: ") + e.what()));
      } catch (const std::exception& e) {
        send_json(res, 500, {{"error", "InternalError"}, {"message", e.what()}, {"field", ""}});
      }
    };
  };
  auto& s = *server_;
  const std::string id = "/v1/reservations/([^/]+)";
  const std::string exp = "/v1/experiments/([^/]+)";

  s.Get("/v1/inventory", wrap(Auth::Any, 200, [this](auto&, auto&) { return orch_.inventory(); }));
  s.Get("/v1/capacity", wrap(Auth::Any, 200, [this](auto&, auto&) { return orch_.capacity(); }));
  s.Post("/v1/inventory/reload",
         wrap(Auth::Admin, 200, [this](auto&, const ApiSession& a) { return orch_.reload_inventory(a); }));

  s.Post("/v1/reservations", wrap(Auth::Any, 201, [this](const httplib::Request& req, const ApiSession& a) {
           return orch_.create_reservation(a, body_of(req));
         }));
  s.Get(id, wrap(Auth::Any, 200,
                 [this](const httplib::Request& req, auto&) { return orch_.get_reservation(req.matches[1]); }));
  s.Get("/v1/schedule", wrap(Auth::Any, 200, [this](const httplib::Request& req, auto&) {
          return orch_.schedule(utc_param(req, "from"), utc_param(req, "to"));
        }));
  s.Post(id + "/evaluate", wrap(Auth::Any, 200, [this](const httplib::Request& req, const ApiSession& a) {
           return orch_.evaluate(a, req.matches[1]);
         }));
  s.Post(id + "/review", wrap(Auth::Admin, 200, [this](const httplib::Request& req, const ApiSession& a) {
           return orch_.review(a, req.matches[1], detail::get_required<bool>(body_of(req), "approve", "body"));
         }));
  s.Post(id + "/activate", wrap(Auth::Any, 200, [this](const httplib::Request& req, const ApiSession& a) {
           return orch_.activate(a, req.matches[1]);
         }));
  s.Post(id + "/complete", wrap(Auth::Any, 200, [this](const httplib::Request& req, const ApiSession& a) {
           return orch_.complete(a, req.matches[1]);
         }));
  s.Post(id + "/cancel", wrap(Auth::Any, 200, [this](const httplib::Request& req, const ApiSession& a) {
           return orch_.cancel(a, req.matches[1]);
         }));
  s.Post(id + "/survey", wrap(Auth::Any, 200, [this](const httplib::Request& req, const ApiSession& a) {
           return orch_.survey(a, req.matches[1], body_of(req));
         }));
  s.Get("/v1/utilization", wrap(Auth::Any, 200, [this](const httplib::Request& req, auto&) {
          const auto from = utc_param(req, "from");
          const auto to = utc_param(req, "to");
          if (!from || !to) throw Error(ErrorKind::Validation, "from and to are required", "from");
          const auto bucket = static_cast<std::int64_t>(double_param(req, "bucket", 3600));
          return orch_.utilization(*from, *to, bucket);
        }));

  s.Put("/v1/scenario", wrap(Auth::Any, 200, [this](const httplib::Request& req, auto&) {
          return orch_.put_scenario(body_of(req));
        }));
  s.Get("/v1/scenario", wrap(Auth::Any, 200, [this](auto&, auto&) { return orch_.get_scenario(); }));
  s.Post("/v1/emulation/run", wrap(Auth::Any, 200, [this](const httplib::Request& req, auto&) {
           return orch_.run_emulation(body_of(req));
         }));

  s.Post("/v1/experiments", wrap(Auth::Any, 201, [this](const httplib::Request& req, const ApiSession& a) {
           return orch_.open_experiment(a, body_of(req));
         }));
  s.Get("/v1/experiments", wrap(Auth::Any, 200, [this](auto&, auto&) { return orch_.experiments(); }));
  s.Get(exp, wrap(Auth::Any, 200,
                  [this](const httplib::Request& req, auto&) { return orch_.experiment(req.matches[1]); }));
  s.Post(exp + "/records", wrap(Auth::Any, 200, [this](const httplib::Request& req, auto&) {
           return orch_.append_records(req.matches[1], body_of(req));
         }));
  s.Get(exp + "/records", wrap(Auth::Any, 200, [this](const httplib::Request& req, auto&) {
          constexpr double inf = std::numeric_limits<double>::infinity();
          RecordFilter f;
          if (req.has_param("t_from") || req.has_param("t_to"))
            f.t_utc = {double_param(req, "t_from", -inf), double_param(req, "t_to", inf)};
          if (req.has_param("node")) f.node_id = req.get_param_value("node");
          if (req.has_param("freq_min") || req.has_param("freq_max"))
            f.freq_hz = {double_param(req, "freq_min", -inf), double_param(req, "freq_max", inf)};
          if (req.has_param("az_min") || req.has_param("az_max"))
            f.azimuth_deg = {double_param(req, "az_min", -inf), double_param(req, "az_max", inf)};
          return orch_.query_records(req.matches[1], f);
        }));
  s.Post(exp + "/seal", wrap(Auth::Any, 200, [this](const httplib::Request& req, auto&) {
           return orch_.seal_experiment(req.matches[1]);
         }));

  // Server-push stream: one "node_status" event per NodeStatusEvent, with
  // the event id as the SSE id. Resume with Last-Event-ID (or ?last_event_id).
  // ?follow=0 sends the backlog and closes.
  s.Get("/v1/events", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      orch_.authenticate(token_of(req));
      std::uint64_t cursor = 0;
      const auto header = req.get_header_value("Last-Event-ID");
      const std::string resume = !header.empty() ? header : req.has_param("last_event_id") ? req.get_param_value("last_event_id") : "";
      if (!resume.empty()) {
        try {
          cursor = std::stoull(resume);
        } catch (const std::exception&) {
          throw Error(ErrorKind::Validation, "Last-Event-ID must be an event id", "last_event_id");
        }
      }
      const bool follow = !(req.has_param("follow") && req.get_param_value("follow") == "0");
      res.set_header("Cache-Control", "no-cache");
      res.set_chunked_content_provider("text/event-stream", [this, cursor, follow](std::size_t, httplib::DataSink& sink) mutable {
        const auto wait = follow ? std::chrono::milliseconds(1000) : std::chrono::milliseconds(0);
        const auto batch = orch_.events_after(cursor, wait);
        std::string out;
        for (const auto& e : batch) {
          out += "id: " + std::to_string(e.id) + "\nevent: node_status\ndata: " + to_json(e).dump() + "\n\n";
          cursor = e.id;
        }
        if (out.empty() && follow) out = ": keep-alive\n\n";
        if (!out.empty() && !sink.write(out.data(), out.size())) return false;
        if (!follow || orch_.events_closed()) sink.done();
        return true;
      });
    } catch (const Error& e) {
      send_error(res, e);
    }
  });
}

void GatewayServer::start() {
  const auto& c = orch_.config();
  if (c.port == 0) {
    port_ = server_->bind_to_any_port(c.bind_address);
    if (port_ < 0) throw Error(ErrorKind::Bind, "cannot bind " + c.bind_address);
  } else {
    if (!server_->bind_to_port(c.bind_address, c.port))
      throw Error(ErrorKind::Bind, "cannot bind " + c.bind_address + ":" + std::to_string(c.port));
    port_ = c.port;
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
}

void GatewayServer::wait() {
  if (thread_.joinable()) thread_.join();
}

void GatewayServer::request_stop() {
  orch_.close_events();
  server_->stop();
}

void GatewayServer::stop() {
  request_stop();
  wait();
}

}  // namespace sdrbed
