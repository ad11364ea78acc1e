#include "sdrbed/inventory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "json_util.hpp"
#include "sdrbed/digest.hpp"
#include "sdrbed/error.hpp"

namespace sdrbed {

using detail::get_array;
using detail::get_or;
using nlohmann::json;

std::string_view to_string(RadioPath path) {
  return path == RadioPath::OverTheAir ? "OverTheAir" : "Emulator";
}

RadioPath radio_path_from_string(std::string_view text) {
  if (text == "OverTheAir" || text == "ota" || text == "OTA") return RadioPath::OverTheAir;
  if (text == "Emulator" || text == "emulator") return RadioPath::Emulator;
  throw Error(ErrorKind::Validation, "unknown radio path '" + std::string(text) + "'", "path");
}

const SdrDevice* Inventory::find_device(std::string_view id) const {
  auto it = std::find_if(sdr_devices.begin(), sdr_devices.end(),
                         [&](const SdrDevice& d) { return d.id == id; });
  return it == sdr_devices.end() ? nullptr : &*it;
}

const ComputeNode* Inventory::find_node(std::string_view id) const {
  auto it = std::find_if(compute_nodes.begin(), compute_nodes.end(),
                         [&](const ComputeNode& n) { return n.id == id; });
  return it == compute_nodes.end() ? nullptr : &*it;
}

std::size_t Inventory::device_count(RadioPath path) const {
  return static_cast<std::size_t>(std::count_if(
      sdr_devices.begin(), sdr_devices.end(), [&](const SdrDevice& d) { return d.attachment == path; }));
}

bool Inventory::knows_software(std::string_view label) const {
  return std::find(software_catalog.begin(), software_catalog.end(), label) != software_catalog.end();
}

namespace {

[[noreturn]] void invalid(const std::string& field, const std::string& why) {
  throw Error(ErrorKind::Validation, field + ": " + why, field);
}

bool finite(double v) { return std::isfinite(v); }

SdrDevice device_from_json(const json& j, const std::string& path) {
  SdrDevice d;
  d.id = get_or<std::string>(j, "id", "", path);
  d.daughterboards = get_or<int>(j, "daughterboards", d.daughterboards, path);
  d.max_center_freq_hz = get_or<double>(j, "max_center_freq_hz", d.max_center_freq_hz, path);
  d.max_instant_bw_hz = get_or<double>(j, "max_instant_bw_hz", d.max_instant_bw_hz, path);
  d.tx_chains = get_or<int>(j, "tx_chains", d.tx_chains, path);
  d.rx_chains = get_or<int>(j, "rx_chains", d.rx_chains, path);
  d.attachment = radio_path_from_string(get_or<std::string>(j, "attachment", "OverTheAir", path));
  d.node_id = get_or<std::string>(j, "node_id", "", path);
  return d;
}

ComputeNode node_from_json(const json& j, const std::string& path) {
  ComputeNode n;
  n.id = get_or<std::string>(j, "id", "", path);
  n.cores = get_or<int>(j, "cores", n.cores, path);
  n.clock_ghz = get_or<double>(j, "clock_ghz", n.clock_ghz, path);
  n.ram_gb = get_or<double>(j, "ram_gb", n.ram_gb, path);
  n.ram_max_gb = get_or<double>(j, "ram_max_gb", n.ram_max_gb, path);
  n.storage_gb = get_or<double>(j, "storage_gb", n.storage_gb, path);
  return n;
}

}  // namespace

void validate(const Inventory& inv) {
  std::set<std::string> ids;
  std::map<std::string, int> per_node;
  for (std::size_t i = 0; i < inv.sdr_devices.size(); ++i) {
    const auto& d = inv.sdr_devices[i];
    const std::string p = "sdr_devices[" + std::to_string(i) + "]";
    if (d.id.empty()) invalid(p + ".id", "must be non-empty");
    if (!ids.insert(d.id).second) invalid(p + ".id", "duplicate id '" + d.id + "'");
    if (!finite(d.max_instant_bw_hz) || d.max_instant_bw_hz <= 0) invalid(p + ".max_instant_bw_hz", "must be > 0");
    if (!finite(d.max_center_freq_hz) || d.max_center_freq_hz <= d.max_instant_bw_hz / 2)
      invalid(p + ".max_center_freq_hz", "must exceed half the instantaneous bandwidth");
    if (d.tx_chains < 0) invalid(p + ".tx_chains", "must be >= 0");
    if (d.rx_chains < 0) invalid(p + ".rx_chains", "must be >= 0");
    if (d.daughterboards < 1) invalid(p + ".daughterboards", "must be >= 1");
    if (d.node_id.empty()) invalid(p + ".node_id", "must be non-empty");
    if (++per_node[d.node_id] > 2) invalid(p + ".node_id", "node '" + d.node_id + "' groups more than 2 devices");
  }
  for (std::size_t i = 0; i < inv.compute_nodes.size(); ++i) {
    const auto& n = inv.compute_nodes[i];
    const std::string p = "compute_nodes[" + std::to_string(i) + "]";
    if (n.id.empty()) invalid(p + ".id", "must be non-empty");
    if (!ids.insert(n.id).second) invalid(p + ".id", "duplicate id '" + n.id + "'");
    if (n.cores < 1) invalid(p + ".cores", "must be >= 1");
    if (!finite(n.ram_gb) || n.ram_gb < 0) invalid(p + ".ram_gb", "must be >= 0");
    if (!finite(n.ram_max_gb) || n.ram_gb > n.ram_max_gb) invalid(p + ".ram_gb", "exceeds ram_max_gb");
    if (!finite(n.storage_gb) || n.storage_gb < 0) invalid(p + ".storage_gb", "must be >= 0");
    if (!finite(n.clock_ghz) || n.clock_ghz <= 0) invalid(p + ".clock_ghz", "must be > 0");
  }
  if (inv.fabric.ports < 1) invalid("fabric.ports", "must be >= 1");
  if (!finite(inv.fabric.port_rate_bps) || inv.fabric.port_rate_bps <= 0) invalid("fabric.port_rate_bps", "must be > 0");
  if (!finite(inv.fabric.base_latency_ns) || inv.fabric.base_latency_ns < 0)
    invalid("fabric.base_latency_ns", "must be >= 0");
  for (std::size_t i = 0; i < inv.licensed_bands.size(); ++i) {
    const auto& b = inv.licensed_bands[i];
    const std::string p = "licensed_bands[" + std::to_string(i) + "]";
    if (!finite(b.low_hz) || !finite(b.high_hz) || !(b.low_hz < b.high_hz)) invalid(p, "low_hz must be < high_hz");
    if (b.low_hz <= 0) invalid(p + ".low_hz", "must be > 0");
  }
  std::set<std::string> labels;
  for (const auto& s : inv.software_catalog) {
    if (s.empty()) invalid("software_catalog", "empty label");
    if (!labels.insert(s).second) invalid("software_catalog", "duplicate label '" + s + "'");
  }
}

Inventory inventory_from_json(const json& doc) {
  if (!doc.is_object()) throw Error(ErrorKind::Parse, "inventory document must be an object");
  Inventory inv;
  const auto& devices = get_array(doc, "sdr_devices", "inventory");
  for (std::size_t i = 0; i < devices.size(); ++i)
    inv.sdr_devices.push_back(device_from_json(devices[i], "sdr_devices[" + std::to_string(i) + "]"));
  const auto& nodes = get_array(doc, "compute_nodes", "inventory");
  for (std::size_t i = 0; i < nodes.size(); ++i)
    inv.compute_nodes.push_back(node_from_json(nodes[i], "compute_nodes[" + std::to_string(i) + "]"));
  if (doc.contains("fabric") && !doc["fabric"].is_null()) {
    const auto& f = doc["fabric"];
    inv.fabric.ports = get_or<int>(f, "ports", inv.fabric.ports, "fabric");
    inv.fabric.port_rate_bps = get_or<double>(f, "port_rate_bps", inv.fabric.port_rate_bps, "fabric");
    inv.fabric.base_latency_ns = get_or<double>(f, "base_latency_ns", inv.fabric.base_latency_ns, "fabric");
  }
  const auto& bands = get_array(doc, "licensed_bands", "inventory");
  for (std::size_t i = 0; i < bands.size(); ++i) {
    const std::string p = "licensed_bands[" + std::to_string(i) + "]";
    LicensedBand b;
    b.low_hz = detail::get_required<double>(bands[i], "low_hz", p);
    b.high_hz = detail::get_required<double>(bands[i], "high_hz", p);
    b.label = get_or<std::string>(bands[i], "label", "", p);
    inv.licensed_bands.push_back(std::move(b));
  }
  for (const auto& s : get_array(doc, "software_catalog", "inventory")) {
    if (!s.is_string()) invalid("software_catalog", "labels must be strings");
    inv.software_catalog.push_back(s.get<std::string>());
  }
  validate(inv);
  return inv;
}

Inventory load_inventory(std::string_view document) {
  return inventory_from_json(detail::parse_document(document));
}

Inventory load_inventory_file(const std::string& path) { return load_inventory(detail::read_file(path)); }

json to_json(const Inventory& inv) {
  json doc;
  doc["sdr_devices"] = json::array();
  for (const auto& d : inv.sdr_devices) {
    doc["sdr_devices"].push_back({{"id", d.id},
                                  {"daughterboards", d.daughterboards},
                                  {"max_center_freq_hz", d.max_center_freq_hz},
                                  {"max_instant_bw_hz", d.max_instant_bw_hz},
                                  {"tx_chains", d.tx_chains},
                                  {"rx_chains", d.rx_chains},
                                  {"attachment", std::string(to_string(d.attachment))},
                                  {"node_id", d.node_id}});
  }
  doc["compute_nodes"] = json::array();
  for (const auto& n : inv.compute_nodes) {
    doc["compute_nodes"].push_back({{"id", n.id},
                                    {"cores", n.cores},
                                    {"clock_ghz", n.clock_ghz},
                                    {"ram_gb", n.ram_gb},
                                    {"ram_max_gb", n.ram_max_gb},
                                    {"storage_gb", n.storage_gb}});
  }
  doc["fabric"] = {{"ports", inv.fabric.ports},
                   {"port_rate_bps", inv.fabric.port_rate_bps},
                   {"base_latency_ns", inv.fabric.base_latency_ns}};
  doc["licensed_bands"] = json::array();
  for (const auto& b : inv.licensed_bands)
    doc["licensed_bands"].push_back({{"low_hz", b.low_hz}, {"high_hz", b.high_hz}, {"label", b.label}});
  doc["software_catalog"] = inv.software_catalog;
  return doc;
}

Inventory default_inventory() {
  Inventory inv;
  char buf[32];
  for (int i = 0; i < 10; ++i) {
    SdrDevice d;
    std::snprintf(buf, sizeof buf, "usrp-%02d", i + 1);
    d.id = buf;
    std::snprintf(buf, sizeof buf, "rrh-%02d", i / 2 + 1);
    d.node_id = buf;
    inv.sdr_devices.push_back(d);
  }
  for (int i = 0; i < 5; ++i) {
    SdrDevice d;
    std::snprintf(buf, sizeof buf, "emu-usrp-%02d", i + 1);
    d.id = buf;
    std::snprintf(buf, sizeof buf, "emu-%02d", i / 2 + 1);
    d.node_id = buf;
    d.attachment = RadioPath::Emulator;
    inv.sdr_devices.push_back(d);
  }
  for (int i = 0; i < 10; ++i) {
    ComputeNode n;
    std::snprintf(buf, sizeof buf, "node-%02d", i + 1);
    n.id = buf;
    inv.compute_nodes.push_back(n);
  }
  inv.licensed_bands.push_back({138.0e6, 3600.0e6, "experimental"});
  inv.software_catalog = {"CRTS", "srsLTE", "GNUradio", "LiquidDSP", "SAS"};
  return inv;
}

CapacityReport capacity_summary(const Inventory& inv) {
  CapacityReport r;
  std::map<std::string, double> node_bw;
  for (const auto& d : inv.sdr_devices) {
    ++r.sdr_devices;
    if (d.attachment == RadioPath::OverTheAir)
      ++r.sdr_over_the_air;
    else
      ++r.sdr_emulator;
    r.total_instant_bw_hz += d.max_instant_bw_hz;
    r.total_tx_chains += d.tx_chains;
    r.total_rx_chains += d.rx_chains;
    node_bw[d.node_id] += d.max_instant_bw_hz;
  }
  r.radio_nodes = node_bw.size();
  for (const auto& [node, bw] : node_bw) r.total_instant_bw_per_dual_node_hz = std::max(r.total_instant_bw_per_dual_node_hz, bw);
  for (const auto& n : inv.compute_nodes) {
    ++r.compute_nodes;
    r.total_cores += n.cores;
    r.total_ram_gb += n.ram_gb;
    r.total_ram_max_gb += n.ram_max_gb;
    r.total_storage_gb += n.storage_gb;
  }
  if (!inv.sdr_devices.empty() || !inv.compute_nodes.empty()) {
    r.fabric_ports = inv.fabric.ports;
    r.fabric_capacity_bps = inv.fabric.capacity_bps();
  }
  for (const auto& b : inv.licensed_bands) r.licensed_span_hz += b.high_hz - b.low_hz;
  return r;
}

json to_json(const CapacityReport& r) {
  return {{"sdr_devices", r.sdr_devices},
          {"sdr_over_the_air", r.sdr_over_the_air},
          {"sdr_emulator", r.sdr_emulator},
          {"radio_nodes", r.radio_nodes},
          {"total_instant_bw_hz", r.total_instant_bw_hz},
          {"total_instant_bw_per_dual_node_hz", r.total_instant_bw_per_dual_node_hz},
          {"total_tx_chains", r.total_tx_chains},
          {"total_rx_chains", r.total_rx_chains},
          {"compute_nodes", r.compute_nodes},
          {"total_cores", r.total_cores},
          {"total_ram_gb", r.total_ram_gb},
          {"total_ram_max_gb", r.total_ram_max_gb},
          {"total_storage_gb", r.total_storage_gb},
          {"fabric_ports", r.fabric_ports},
          {"fabric_capacity_bps", r.fabric_capacity_bps},
          {"licensed_span_hz", r.licensed_span_hz}};
}

std::optional<LicensedBand> band_containing(const Inventory& inv, double f_hz) {
  for (const auto& b : inv.licensed_bands)
    if (b.contains(f_hz)) return b;
  return std::nullopt;
}

std::string inventory_hash(const Inventory& inv) { return sha256_hex(to_json(inv).dump()); }

}  // namespace sdrbed
