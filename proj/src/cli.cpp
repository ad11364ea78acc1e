#include "sdrbed/cli.hpp"

#include <CLI11.hpp>
#include <httplib.h>
#include <signal.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json_util.hpp"
#include "sdrbed/allocator.hpp"
#include "sdrbed/chanem.hpp"
#include "sdrbed/event_log.hpp"
#include "sdrbed/gateway.hpp"
#include "sdrbed/inventory.hpp"
#include "sdrbed/roundtrip.hpp"
#include "sdrbed/scheduler.hpp"

namespace sdrbed {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

/// Non-2xx answer from the gateway.
struct HttpFailure {
  int status = 0;
  json body;
};

struct ConnectionFailure {
  std::string server;
  std::string reason;
};

class ApiClient {
 public:
  ApiClient(std::string server, std::string token) : server_(std::move(server)), token_(std::move(token)) {}

  json get(const std::string& path, const httplib::Params& params = {}) const {
    auto cli = client();
    return finish(cli->Get(path, params, headers()));
  }
  json post(const std::string& path, const json& body = json::object()) const {
    auto cli = client();
    return finish(cli->Post(path, headers(), body.dump(), "application/json"));
  }
  json put(const std::string& path, const json& body) const {
    auto cli = client();
    return finish(cli->Put(path, headers(), body.dump(), "application/json"));
  }

  /// Streams /v1/events, calling `on_event` per event until it returns false
  /// or the server closes the stream.
  void events(std::uint64_t after, bool follow, const std::function<bool(const json&)>& on_event) const {
    auto cli = client();
    httplib::Headers h = headers();
    if (after > 0) h.emplace("Last-Event-ID", std::to_string(after));
    std::string path = "/v1/events";
    if (!follow) path += "?follow=0";
    std::string buffer;
    std::string error_body;
    int status = 0;
    auto res = cli->Get(
        path, h,
        [&](const httplib::Response& r) {
          status = r.status;
          return true;
        },
        [&](const char* data, std::size_t len) {
          if (status != 200) {
            error_body.append(data, len);
            return true;
          }
          buffer.append(data, len);
          std::size_t end;
          while ((end = buffer.find("\n\n")) != std::string::npos) {
            const std::string frame = buffer.substr(0, end);
            buffer.erase(0, end + 2);
            std::istringstream lines(frame);
            std::string line;
            while (std::getline(lines, line)) {
              if (line.rfind("data: ", 0) == 0 && !on_event(json::parse(line.substr(6)))) return false;
            }
          }
          return true;
        });
    if (status != 0 && status != 200) throw HttpFailure{status, json::parse(error_body, nullptr, false)};
    if (!res && res.error() != httplib::Error::Canceled) throw ConnectionFailure{server_, httplib::to_string(res.error())};
  }

 private:
  std::unique_ptr<httplib::Client> client() const {
    auto cli = std::make_unique<httplib::Client>(server_);
    cli->set_connection_timeout(5);
    cli->set_read_timeout(600);
    return cli;
  }
  httplib::Headers headers() const {
    httplib::Headers h;
    if (!token_.empty()) h.emplace("Authorization", "Bearer " + token_);
    return h;
  }
  json finish(const httplib::Result& res) const {
    if (!res) throw ConnectionFailure{server_, httplib::to_string(res.error())};
    json body = json::parse(res->body, nullptr, false);
    if (res->status < 200 || res->status >= 300) throw HttpFailure{res->status, body};
    return body;
  }

  std::string server_;
  std::string token_;
};

Timestamp parse_when(const std::string& text) {
  if (text == "now") return system_clock_now();
  return parse_utc(text);
}

Channel parse_channel(const std::string& text) {
  const auto colon = text.find(':');
  try {
    if (colon == std::string::npos) throw std::invalid_argument(text);
    return {std::stod(text.substr(0, colon)), std::stod(text.substr(colon + 1))};
  } catch (const std::exception&) {
    throw Error(ErrorKind::Usage, "channel must be CENTER_HZ:BW_HZ, got '" + text + "'", "channel");
  }
}

json parse_tx(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string p;
  while (std::getline(ss, p, ':')) parts.push_back(p);
  if (parts.empty() || parts.size() > 3 || parts[0].empty())
    throw Error(ErrorKind::Usage, "tx must be RADIO[:TONE_HZ[:POWER_DBM]], got '" + text + "'", "tx");
  json tx = {{"radio_id", parts[0]}};
  try {
    if (parts.size() > 1) tx["tone_hz"] = std::stod(parts[1]);
    if (parts.size() > 2) tx["power_dbm"] = std::stod(parts[2]);
  } catch (const std::exception&) {
    throw Error(ErrorKind::Usage, "tx must be RADIO[:TONE_HZ[:POWER_DBM]], got '" + text + "'", "tx");
  }
  return tx;
}

/// Reads a JSON array or JSON lines.
json read_records(const std::string& path) {
  const std::string text = detail::read_file(path);
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '[') return detail::parse_document(text);
  json out = json::array();
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (line.find_first_not_of(" \t\r") != std::string::npos) out.push_back(detail::parse_document(line));
  return out;
}

void print(std::ostream& out, const json& j) { out << j.dump(2) << "\n"; }

int serve(const GatewayConfig& config, std::ostream& out) {
  sigset_t stop_signals;
  sigemptyset(&stop_signals);
  sigaddset(&stop_signals, SIGINT);
  sigaddset(&stop_signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);

  Orchestrator orch(config);
  GatewayServer server(orch);
  server.start();
  out << "listening on http://" << config.bind_address << ":" << server.port() << " state " << config.state_dir
      << std::endl;
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&stop_signals, &sig);
    server.request_stop();
  });
  server.wait();
  if (waiter.joinable()) {
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
  }
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Testbed orchestrator: reservations, spectrum virtualization, channel emulation, experiment data"};
  app.name("sdrbed");
  app.require_subcommand(1);
  app.fallthrough();

  std::string server = "http://127.0.0.1:8080";
  std::string token;
  bool as_json = false;
  app.add_option("--server", server, "Gateway base URL")->envname("SDRBED_SERVER");
  app.add_option("--token", token, "API token")->envname("SDRBED_TOKEN");
  app.add_flag("--json", as_json, "Print full JSON responses");

  std::function<int()> action;
  auto api = [&] { return ApiClient(server, token); };

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP gateway");
  std::string config_path, state_dir, inventory_path, bind_address = "127.0.0.1";
  int port = 8080;
  std::vector<std::string> token_specs;
  bool no_fsync = false;
  serve_cmd->add_option("--config", config_path, "Gateway config document");
  serve_cmd->add_option("--state-dir", state_dir, "State directory");
  serve_cmd->add_option("--inventory", inventory_path, "Inventory document");
  serve_cmd->add_option("--bind", bind_address, "Bind address");
  serve_cmd->add_option("--port", port, "Port (0 picks one)");
  serve_cmd->add_option("--add-token", token_specs, "TOKEN:USER:ROLE (repeatable)");
  serve_cmd->add_flag("--no-fsync", no_fsync, "Skip fdatasync after each write");
  serve_cmd->callback([&] {
    action = [&] {
      GatewayConfig c = config_path.empty() ? GatewayConfig{} : load_gateway_config(config_path);
      if (!state_dir.empty()) c.state_dir = state_dir;
      if (!inventory_path.empty()) c.inventory_path = inventory_path;
      if (serve_cmd->count("--bind")) c.bind_address = bind_address;
      if (serve_cmd->count("--port")) c.port = port;
      if (no_fsync) c.fsync = false;
      for (const auto& spec : token_specs) {
        std::vector<std::string> f;
        std::stringstream ss(spec);
        std::string part;
        while (std::getline(ss, part, ':')) f.push_back(part);
        if (f.size() != 3 || (f[2] != "User" && f[2] != "Admin"))
          throw Error(ErrorKind::Usage, "--add-token wants TOKEN:USER:User|Admin", "add-token");
        c.tokens[f[0]] = {f[0], f[1], f[2] == "Admin" ? Role::Admin : Role::User};
      }
      return serve(c, out);
    };
  });

  // inventory / capacity / throughput
  std::string inv_file;
  auto* inventory_cmd = app.add_subcommand("inventory", "Show the inventory (or validate a local document)");
  bool builtin = false;
  inventory_cmd->add_option("--file", inv_file, "Validate and print a local inventory document");
  inventory_cmd->add_flag("--default", builtin, "Print the built-in default inventory");
  inventory_cmd->callback([&] {
    action = [&] {
      if (builtin)
        print(out, to_json(default_inventory()));
      else
        print(out, inv_file.empty() ? api().get("/v1/inventory") : to_json(load_inventory_file(inv_file)));
      return 0;
    };
  });
  auto* capacity_cmd = app.add_subcommand("capacity", "Capacity summary");
  capacity_cmd->add_option("--file", inv_file, "Summarize a local inventory document");
  capacity_cmd->callback([&] {
    action = [&] {
      print(out, inv_file.empty() ? api().get("/v1/capacity") : to_json(capacity_summary(load_inventory_file(inv_file))));
      return 0;
    };
  });
  auto* reload_cmd = app.add_subcommand("reload-inventory", "Reload the inventory document (Admin)");
  reload_cmd->callback([&] {
    action = [&] {
      print(out, api().post("/v1/inventory/reload"));
      return 0;
    };
  });
  double tp_rate = 0;
  std::string tp_format = "SC16";
  int tp_streams = 1;
  double tp_port = 10e9;
  auto* throughput_cmd = app.add_subcommand("throughput", "Check a stream configuration against the port rate");
  throughput_cmd->add_option("--rate", tp_rate, "Sample rate (S/s)")->required();
  throughput_cmd->add_option("--format", tp_format, "SC16, SC8 or float64");
  throughput_cmd->add_option("--streams", tp_streams, "Concurrent streams");
  throughput_cmd->add_option("--port-rate", tp_port, "Port rate (b/s)");
  throughput_cmd->callback([&] {
    action = [&] {
      SpectrumBlock block;
      block.sample_rate_sps = static_cast<std::int64_t>(tp_rate);
      block.sample_format = sample_format_from_string(tp_format);
      NetworkFabric fabric;
      fabric.port_rate_bps = tp_port;
      const auto r = throughput_check(block, fabric, tp_streams);
      out << (r.fits ? "Fit" : "Exceeds") << " required_bps=" << static_cast<std::int64_t>(r.required_bps)
          << " port_rate_bps=" << static_cast<std::int64_t>(tp_port) << "\n";
      return 0;
    };
  });

  // reservations
  auto* reserve_cmd = app.add_subcommand("reserve", "Request a reservation");
  int usrps = 0, cores = 0, threads = 0;
  double ram = 0, storage = 0, network_bps = 0, hours = 0, lifetime_h = 0;
  std::vector<std::string> channels, software;
  std::string path = "ota", start = "now", end;
  reserve_cmd->add_option("--usrps", usrps, "Number of SDR devices");
  reserve_cmd->add_option("--channel", channels, "CENTER_HZ:BW_HZ (repeatable)");
  reserve_cmd->add_option("--path", path, "ota or emulator");
  reserve_cmd->add_option("--ram", ram, "RAM (GB)");
  reserve_cmd->add_option("--storage", storage, "Storage (GB)");
  reserve_cmd->add_option("--cores", cores, "CPU cores");
  reserve_cmd->add_option("--threads", threads, "CPU threads");
  reserve_cmd->add_option("--vm-lifetime-hours", lifetime_h, "VM lifetime (hours)");
  reserve_cmd->add_option("--software", software, "Software package (repeatable)");
  reserve_cmd->add_option("--network-bps", network_bps, "Network bandwidth (b/s)");
  reserve_cmd->add_option("--start", start, "UTC start (ISO-8601, epoch seconds or 'now')");
  auto* hours_opt = reserve_cmd->add_option("--hours", hours, "Duration (hours)");
  reserve_cmd->add_option("--end", end, "UTC end")->excludes(hours_opt);
  reserve_cmd->callback([&] {
    action = [&] {
      const Timestamp s = parse_when(start);
      Timestamp e = 0;
      if (!end.empty())
        e = parse_when(end);
      else if (hours > 0)
        e = s + static_cast<Timestamp>(std::llround(hours * 3600));
      else
        throw Error(ErrorKind::Usage, "give --hours or --end", "hours");
      json chans = json::array();
      for (const auto& c : channels) {
        const auto ch = parse_channel(c);
        chans.push_back({{"center_hz", ch.center_hz}, {"bw_hz", ch.bw_hz}});
      }
      const json spec = {
          {"compute",
           {{"ram_gb", ram},
            {"storage_gb", storage},
            {"cpu_cores", cores},
            {"cpu_threads", threads},
            {"vm_lifetime_s", static_cast<std::int64_t>(std::llround(lifetime_h * 3600))},
            {"software", software}}},
          {"radio", {{"n_usrps", usrps}, {"channels", chans}, {"path", path}}},
          {"network", {{"requested_bps", network_bps}}}};
      const json r = api().post("/v1/reservations", {{"start_utc", s}, {"end_utc", e}, {"spec", spec}});
      if (as_json)
        print(out, r);
      else
        out << r.at("id").get<std::string>() << " " << r.at("state").get<std::string>() << "\n";
      return 0;
    };
  });

  std::string id;
  auto simple = [&](const char* name, const char* help, std::function<json()> call) {
    auto* cmd = app.add_subcommand(name, help);
    cmd->add_option("id", id, "Reservation id")->required();
    cmd->callback([&, call] {
      action = [&, call] {
        const json r = call();
        if (as_json || !r.contains("state")) {
          print(out, r);
        } else {
          out << r.at("id").get<std::string>() << " " << r.at("state").get<std::string>() << "\n";
        }
        return 0;
      };
    });
    return cmd;
  };
  auto* show_cmd = app.add_subcommand("show", "Show a reservation");
  show_cmd->add_option("id", id, "Reservation id")->required();
  show_cmd->callback([&] {
    action = [&] {
      print(out, api().get("/v1/reservations/" + id));
      return 0;
    };
  });
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Evaluate a Tentative reservation");
  evaluate_cmd->add_option("id", id, "Reservation id")->required();
  evaluate_cmd->callback([&] {
    action = [&] {
      const json r = api().post("/v1/reservations/" + id + "/evaluate");
      if (as_json) {
        print(out, r);
      } else {
        out << id << " " << r.at("reservation").at("state").get<std::string>() << "\n";
        for (const auto& c : r.at("conflicts")) out << "conflict " << c.dump() << "\n";
      }
      return 0;
    };
  });
  bool deny = false;
  auto* approve_cmd = simple("approve", "Approve (or --deny) a PendingReview reservation (Admin)", [&] {
    return api().post("/v1/reservations/" + id + "/review", {{"approve", !deny}});
  });
  approve_cmd->add_flag("--deny", deny, "Deny instead of approve");
  simple("activate", "Activate a Confirmed reservation", [&] { return api().post("/v1/reservations/" + id + "/activate"); });
  simple("cancel", "Cancel a reservation", [&] { return api().post("/v1/reservations/" + id + "/cancel"); });
  auto* complete_cmd = app.add_subcommand("complete", "Complete an Active reservation");
  complete_cmd->add_option("id", id, "Reservation id")->required();
  complete_cmd->callback([&] {
    action = [&] {
      const json r = api().post("/v1/reservations/" + id + "/complete");
      if (as_json) {
        print(out, r);
      } else {
        out << id << " " << r.at("reservation").at("state").get<std::string>() << "\n";
        const auto& qs = r.at("survey").at("questions");
        for (std::size_t i = 0; i < qs.size(); ++i) out << "survey " << i + 1 << ": " << qs[i].get<std::string>() << "\n";
      }
      return 0;
    };
  });
  std::vector<std::string> answers;
  auto* survey_cmd = app.add_subcommand("survey", "Answer the post-usage survey");
  survey_cmd->add_option("id", id, "Reservation id")->required();
  survey_cmd->add_option("--answer", answers, "One answer per question, in order")->required();
  survey_cmd->callback([&] {
    action = [&] {
      print(out, api().post("/v1/reservations/" + id + "/survey", {{"responses", answers}}));
      return 0;
    };
  });

  std::string from, to;
  auto* list_cmd = app.add_subcommand("list", "List reservations overlapping a time range");
  list_cmd->add_option("--from", from, "UTC start");
  list_cmd->add_option("--to", to, "UTC end");
  list_cmd->callback([&] {
    action = [&] {
      httplib::Params p;
      if (!from.empty()) p.emplace("from", std::to_string(parse_when(from)));
      if (!to.empty()) p.emplace("to", std::to_string(parse_when(to)));
      const json rows = api().get("/v1/schedule", p);
      if (as_json) {
        print(out, rows);
      } else {
        for (const auto& r : rows)
          out << r.at("id").get<std::string>() << " " << r.at("state").get<std::string>() << " "
              << r.at("user").get<std::string>() << " " << format_utc(r.at("window").at("start_utc").get<Timestamp>())
              << " " << format_utc(r.at("window").at("end_utc").get<Timestamp>()) << "\n";
      }
      return 0;
    };
  });

  std::int64_t bucket = 3600;
  auto* report_cmd = app.add_subcommand("report", "Utilization report");
  report_cmd->add_option("--from", from, "UTC start")->required();
  report_cmd->add_option("--to", to, "UTC end")->required();
  report_cmd->add_option("--bucket", bucket, "Bucket length (s)");
  report_cmd->callback([&] {
    action = [&] {
      print(out, api().get("/v1/utilization", {{"from", std::to_string(parse_when(from))},
                                               {"to", std::to_string(parse_when(to))},
                                               {"bucket", std::to_string(bucket)}}));
      return 0;
    };
  });

  // live status
  std::uint64_t after = 0;
  bool follow = false;
  int count = 0;
  auto* status_cmd = app.add_subcommand("status", "Latest status of every radio node");
  status_cmd->callback([&] {
    action = [&] {
      std::map<std::string, json> latest;
      api().events(0, false, [&](const json& e) {
        latest[e.at("node_id").get<std::string>()] = e;
        return true;
      });
      if (as_json) {
        json arr = json::array();
        for (const auto& [n, e] : latest) arr.push_back(e);
        print(out, arr);
      } else {
        for (const auto& [n, e] : latest)
          out << n << " " << e.at("state").get<std::string>() << " "
              << (e.at("owner").is_null() ? "-" : e.at("owner").get<std::string>()) << " "
              << format_utc(e.at("t_utc").get<Timestamp>()) << "\n";
      }
      return 0;
    };
  });
  auto* events_cmd = app.add_subcommand("events", "Print node status events");
  events_cmd->add_option("--after", after, "Resume after this event id");
  events_cmd->add_flag("--follow", follow, "Keep streaming");
  events_cmd->add_option("--count", count, "Stop after this many events");
  events_cmd->callback([&] {
    action = [&] {
      int seen = 0;
      api().events(after, follow, [&](const json& e) {
        out << e.dump() << "\n" << std::flush;
        return count <= 0 || ++seen < count;
      });
      return 0;
    };
  });

  // channel emulation
  auto* scenario_cmd = app.add_subcommand("scenario", "Channel scenario");
  scenario_cmd->require_subcommand(1);
  std::string scenario_file;
  auto* scenario_put = scenario_cmd->add_subcommand("put", "Upload a scenario document");
  scenario_put->add_option("file", scenario_file, "Scenario document")->required();
  scenario_put->callback([&] {
    action = [&] {
      print(out, api().put("/v1/scenario", to_json(load_scenario_file(scenario_file))));
      return 0;
    };
  });
  scenario_cmd->add_subcommand("get", "Show the current scenario")->callback([&] {
    action = [&] {
      print(out, api().get("/v1/scenario"));
      return 0;
    };
  });

  auto* emulate_cmd = app.add_subcommand("emulate", "Channel emulation");
  emulate_cmd->require_subcommand(1);
  auto* emulate_run = emulate_cmd->add_subcommand("run", "Run the current scenario's timeline");
  double duration = 1.0, step = 1.0, rate = 1e6;
  std::uint64_t seed = 1;
  std::size_t length = 4096;
  std::vector<std::string> tx;
  std::string reservation;
  emulate_run->add_option("--duration", duration, "Timeline length (s)");
  emulate_run->add_option("--step", step, "Step (s)");
  emulate_run->add_option("--seed", seed, "Noise seed");
  emulate_run->add_option("--length", length, "Samples per step per transmitter (block-rate samples with --reservation)");
  emulate_run->add_option("--rate", rate, "Sample rate when not using a reservation's slots");
  emulate_run->add_option("--tx", tx, "RADIO[:TONE_HZ[:POWER_DBM]] (repeatable)");
  emulate_run->add_option("--reservation", reservation, "Route transmitters through this reservation's slots");
  emulate_run->callback([&] {
    action = [&] {
      json body = {{"duration_s", duration}, {"step_s", step}, {"seed", seed}, {"length", length}, {"rate_sps", rate}};
      json txs = json::array();
      for (const auto& t : tx) txs.push_back(parse_tx(t));
      body["tx"] = txs;
      if (!reservation.empty()) body["reservation_id"] = reservation;
      print(out, api().post("/v1/emulation/run", body));
      return 0;
    };
  });

  // spectrum virtualization (local engine)
  auto* specvirt_cmd = app.add_subcommand("specvirt", "Spectrum virtualization engine");
  specvirt_cmd->require_subcommand(1);
  auto* roundtrip_cmd = specvirt_cmd->add_subcommand("roundtrip", "Aggregate random slot signals and recover them");
  int n_slots = 2, trials = 1;
  std::size_t block_samples = 1 << 18;
  double max_evm = -40.0, max_leak = -50.0;
  roundtrip_cmd->add_option("--slots", n_slots, "Slots per block")->check(CLI::Range(1, 8));
  roundtrip_cmd->add_option("--samples", block_samples, "Block samples per trial");
  roundtrip_cmd->add_option("--trials", trials, "Number of trials");
  roundtrip_cmd->add_option("--seed", seed, "Trial seed");
  roundtrip_cmd->add_option("--max-evm", max_evm, "EVM limit (dBc)");
  roundtrip_cmd->add_option("--max-leakage", max_leak, "Leakage limit (dBc)");
  roundtrip_cmd->callback([&] {
    action = [&] {
      bool ok = true;
      for (int t = 0; t < trials; ++t) {
        const auto slots = roundtrip_trial(n_slots, block_samples, seed + static_cast<std::uint64_t>(t));
        for (std::size_t i = 0; i < slots.size(); ++i) {
          const auto& s = slots[i];
          char line[200];
          std::snprintf(line, sizeof line, "trial %d slot %zu offset_hz=%.6g bw_hz=%.6g rate_sps=%lld evm_dbc=%.2f leakage_dbc=%.2f\n",
                        t, i, s.slot.offset_hz, s.slot.bw_hz, static_cast<long long>(s.slot.slot_rate_sps), s.evm_dbc,
                        s.leakage_dbc);
          out << line;
          ok = ok && s.evm_dbc <= max_evm && s.leakage_dbc <= max_leak;
        }
      }
      if (!ok) {
        err << "error: RoundTripError: a slot exceeded the EVM or leakage limit\n";
        return 1;
      }
      return 0;
    };
  });

  // experiment data
  auto* data_cmd = app.add_subcommand("data", "Experiment archives");
  data_cmd->require_subcommand(1);
  std::string exp_id, records_file;
  std::vector<std::string> formats;
  std::size_t batch = 1000;
  auto* data_open = data_cmd->add_subcommand("open", "Open an archive for an Active reservation");
  data_open->add_option("--reservation", reservation, "Reservation id")->required();
  data_open->add_option("--format", formats, "Sample format recorded in the snapshot (repeatable)");
  data_open->callback([&] {
    action = [&] {
      const json a = api().post("/v1/experiments", {{"reservation_id", reservation}, {"sample_formats", formats}});
      if (as_json)
        print(out, a);
      else
        out << a.at("experiment_id").get<std::string>() << "\n";
      return 0;
    };
  });
  auto* data_append = data_cmd->add_subcommand("append", "Append records from a JSON array or JSON-lines file");
  data_append->add_option("experiment", exp_id, "Experiment id")->required();
  data_append->add_option("--file", records_file, "Records file")->required();
  data_append->add_option("--batch", batch, "Records per request");
  data_append->callback([&] {
    action = [&] {
      const json records = read_records(records_file);
      if (batch == 0) throw Error(ErrorKind::Usage, "--batch must be > 0", "batch");
      json last;
      for (std::size_t i = 0; i < records.size(); i += batch) {
        json chunk = json::array();
        for (std::size_t k = i; k < std::min(records.size(), i + batch); ++k) chunk.push_back(records[k]);
        last = api().post("/v1/experiments/" + exp_id + "/records", {{"records", chunk}});
      }
      out << "appended " << records.size() << " records to " << exp_id;
      if (!last.is_null()) out << " (total " << last.at("record_count").get<std::size_t>() << ")";
      out << "\n";
      return 0;
    };
  });
  auto* data_query = data_cmd->add_subcommand("query", "Query an archive");
  data_query->add_option("experiment", exp_id, "Experiment id")->required();
  std::map<std::string, std::string> filters;
  for (const char* f : {"t-from", "t-to", "node", "freq-min", "freq-max", "az-min", "az-max"}) {
    const std::string key = f;
    data_query->add_option("--" + key, filters[key], "Filter bound");
  }
  data_query->callback([&] {
    action = [&] {
      httplib::Params p;
      for (const auto& [k, v] : filters) {
        if (v.empty()) continue;
        std::string param = k;
        std::replace(param.begin(), param.end(), '-', '_');
        p.emplace(param, v);
      }
      const json r = api().get("/v1/experiments/" + exp_id + "/records", p);
      if (as_json) {
        print(out, r);
      } else {
        for (const auto& rec : r.at("records")) out << rec.dump() << "\n";
      }
      return 0;
    };
  });
  auto* data_seal = data_cmd->add_subcommand("seal", "Seal an archive and print its digest");
  data_seal->add_option("experiment", exp_id, "Experiment id")->required();
  data_seal->callback([&] {
    action = [&] {
      const json r = api().post("/v1/experiments/" + exp_id + "/seal");
      if (as_json)
        print(out, r);
      else
        out << r.at("digest").get<std::string>() << "\n";
      return 0;
    };
  });
  auto* data_show = data_cmd->add_subcommand("show", "Show an archive");
  data_show->add_option("experiment", exp_id, "Experiment id")->required();
  data_show->callback([&] {
    action = [&] {
      print(out, api().get("/v1/experiments/" + exp_id));
      return 0;
    };
  });
  data_cmd->add_subcommand("list", "List archives")->callback([&] {
    action = [&] {
      print(out, api().get("/v1/experiments"));
      return 0;
    };
  });

  // offline replay
  auto* replay_cmd = app.add_subcommand("replay", "Replay a state directory's event log offline");
  replay_cmd->add_option("--state-dir", state_dir, "State directory")->required();
  replay_cmd->add_option("--inventory", inventory_path, "Inventory document the log started from");
  replay_cmd->callback([&] {
    action = [&] {
      auto inv = std::make_shared<const Inventory>(inventory_path.empty() ? default_inventory()
                                                                          : load_inventory_file(inventory_path));
      Scheduler s(inv);
      const auto records = EventLog::read_all((fs::path(state_dir) / "events.jsonl").string());
      s.replay(records);
      if (as_json) {
        print(out, s.snapshot());
      } else {
        out << "replayed " << records.size() << " records: " << s.calendar().size() << " reservations, "
            << s.allocator().live().size() << " live allocations, last_seq " << s.last_seq() << "\n";
      }
      return 0;
    };
  });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: UsageError: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.name() << ": " << e.what() << "\n";
    return e.kind() == ErrorKind::Usage ? 2 : 1;
  }

  try {
    return action ? action() : 2;
  } catch (const HttpFailure& f) {
    const std::string name = f.body.is_object() ? f.body.value("error", "HttpError") : "HttpError";
    const std::string message = f.body.is_object() ? f.body.value("message", "") : "";
    if (f.body.is_object() && f.body.contains("reservation")) print(out, f.body);
    err << "error: " << name << " (" << f.status << "): " << message << "\n";
    return 1;
  } catch (const ConnectionFailure& c) {
    err << "error: ConnectionError: cannot reach " << c.server << ": " << c.reason << "\n";
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.name() << ": " << e.what() << "\n";
    return e.kind() == ErrorKind::Usage ? 2 : 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace sdrbed
