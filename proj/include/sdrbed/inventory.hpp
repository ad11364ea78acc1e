#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace sdrbed {

/// Which RF medium a device (or a radio request) is wired to.
enum class RadioPath { OverTheAir, Emulator };

std::string_view to_string(RadioPath path);
RadioPath radio_path_from_string(std::string_view text);

struct SdrDevice {
  std::string id;
  int daughterboards = 2;
  double max_center_freq_hz = 6.0e9;
  /// Nominal instantaneous bandwidth of the device.
  double max_instant_bw_hz = 160.0e6;
  int tx_chains = 2;
  int rx_chains = 2;
  RadioPath attachment = RadioPath::OverTheAir;
  std::string node_id;

  bool operator==(const SdrDevice&) const = default;
};

struct ComputeNode {
  std::string id;
  int cores = 24;
  double clock_ghz = 3.0;
  double ram_gb = 128.0;
  double ram_max_gb = 1540.0;
  double storage_gb = 2000.0;

  bool operator==(const ComputeNode&) const = default;
};

struct NetworkFabric {
  int ports = 96;
  double port_rate_bps = 10.0e9;
  double base_latency_ns = 550.0;

  /// Aggregate switching capacity used for fabric-wide network budgets.
  double capacity_bps() const { return ports * port_rate_bps; }

  bool operator==(const NetworkFabric&) const = default;
};

/// Licensed band; both edges inclusive.
struct LicensedBand {
  double low_hz = 0.0;
  double high_hz = 0.0;
  std::string label;

  bool contains(double f_hz) const { return f_hz >= low_hz && f_hz <= high_hz; }
  bool contains(double lo_hz, double hi_hz) const { return lo_hz >= low_hz && hi_hz <= high_hz; }

  bool operator==(const LicensedBand&) const = default;
};

/// The static resource pool. Immutable once loaded; share it through
/// `InventoryPtr`.
struct Inventory {
  std::vector<SdrDevice> sdr_devices;
  std::vector<ComputeNode> compute_nodes;
  NetworkFabric fabric;
  std::vector<LicensedBand> licensed_bands;
  std::vector<std::string> software_catalog;

  const SdrDevice* find_device(std::string_view id) const;
  const ComputeNode* find_node(std::string_view id) const;
  std::size_t device_count(RadioPath path) const;
  bool knows_software(std::string_view label) const;

  bool operator==(const Inventory&) const = default;
};

using InventoryPtr = std::shared_ptr<const Inventory>;

struct CapacityReport {
  std::size_t sdr_devices = 0;
  std::size_t sdr_over_the_air = 0;
  std::size_t sdr_emulator = 0;
  std::size_t radio_nodes = 0;
  double total_instant_bw_hz = 0.0;
  /// Largest summed instantaneous bandwidth over any radio node.
  double total_instant_bw_per_dual_node_hz = 0.0;
  int total_tx_chains = 0;
  int total_rx_chains = 0;
  std::size_t compute_nodes = 0;
  long total_cores = 0;
  double total_ram_gb = 0.0;
  double total_ram_max_gb = 0.0;
  double total_storage_gb = 0.0;
  int fabric_ports = 0;
  double fabric_capacity_bps = 0.0;
  double licensed_span_hz = 0.0;

  bool operator==(const CapacityReport&) const = default;
};

/// Parses and validates an inventory document. Omitted fields take the
/// documented defaults; a document without the top-level keys yields an
/// empty pool with the default fabric.
/// Throws Error(Parse) on malformed text and Error(Validation) naming the
/// field on an invariant violation.
Inventory load_inventory(std::string_view document);
Inventory load_inventory_file(const std::string& path);
Inventory inventory_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const Inventory& inv);

/// The stock testbed pool: 10 compute nodes, 96-port fabric, 10 OTA and
/// 5 emulator-attached SDRs, one 138-3600 MHz licensed band.
Inventory default_inventory();

/// Re-checks every invariant; throws Error(Validation).
void validate(const Inventory& inv);

CapacityReport capacity_summary(const Inventory& inv);
nlohmann::json to_json(const CapacityReport& report);

/// First band (in declaration order) whose closed interval contains f_hz.
std::optional<LicensedBand> band_containing(const Inventory& inv, double f_hz);

/// Hex SHA-256 of the canonical JSON serialization.
std::string inventory_hash(const Inventory& inv);

}  // namespace sdrbed
