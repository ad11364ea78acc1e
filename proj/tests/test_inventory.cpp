#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "sdrbed/inventory.hpp"
#include "support.hpp"

using namespace sdrbed;
using testsupport::thrown_kind;

TEST_CASE("default inventory matches the published testbed") {
  const Inventory inv = default_inventory();
  REQUIRE(inv.compute_nodes.size() == 10);
  for (const auto& n : inv.compute_nodes) {
    CHECK(n.cores == 24);
    CHECK(n.ram_gb == 128.0);
    CHECK(n.ram_max_gb == 1540.0);
  }
  CHECK(inv.fabric.ports == 96);
  CHECK(inv.fabric.port_rate_bps == 10.0e9);
  CHECK(inv.fabric.base_latency_ns == 550.0);
  for (const auto& d : inv.sdr_devices) {
    CHECK(d.max_instant_bw_hz == 160.0e6);
    CHECK(d.max_center_freq_hz == 6.0e9);
  }
  REQUIRE(inv.licensed_bands.size() == 1);
  CHECK(inv.licensed_bands[0].low_hz == 138.0e6);
  CHECK(inv.licensed_bands[0].high_hz == 3600.0e6);
  CHECK(inv.device_count(RadioPath::OverTheAir) == 10);
  CHECK(inv.device_count(RadioPath::Emulator) == 5);
  CHECK_NOTHROW(validate(inv));
}

TEST_CASE("capacity summary of the default pool") {
  const auto r = capacity_summary(default_inventory());
  CHECK(r.total_cores == 10 * 24);
  CHECK(r.total_ram_gb == 10 * 128.0);
  CHECK(r.total_ram_max_gb == 10 * 1540.0);
  CHECK(r.total_instant_bw_per_dual_node_hz == 320.0e6);
  CHECK(r.fabric_capacity_bps == 96 * 10.0e9);
  CHECK(r.licensed_span_hz == 3600.0e6 - 138.0e6);
  CHECK(r.sdr_devices == 15);
  CHECK(r.radio_nodes == 8);
}

TEST_CASE("empty inventory has zero totals") {
  const Inventory inv = load_inventory("{}");
  CHECK(inv.sdr_devices.empty());
  CHECK(inv.compute_nodes.empty());
  CHECK(capacity_summary(inv) == CapacityReport{});
}

TEST_CASE("load rejects malformed and invalid documents") {
  CHECK(thrown_kind([] { load_inventory("{\"sdr_devices\": ["); }) == "ParseError");
  CHECK(thrown_kind([] {
          load_inventory(R"({"sdr_devices": [{"id": "a", "node_id": "n", "max_instant_bw_hz": -1}]})");
        }) == "ValidationError");
  try {
    load_inventory(R"({"sdr_devices": [{"id": "a", "node_id": "n", "max_instant_bw_hz": -1}]})");
  } catch (const Error& e) {
    CHECK(e.field().find("max_instant_bw_hz") != std::string::npos);
  }
  CHECK(thrown_kind([] {
          load_inventory(R"({"sdr_devices": [{"id": "a", "node_id": "n"}, {"id": "a", "node_id": "m"}]})");
        }) == "ValidationError");
  CHECK(thrown_kind([] {
          load_inventory(R"({"sdr_devices": [{"id": "a", "node_id": "n"}, {"id": "b", "node_id": "n"},
                                             {"id": "c", "node_id": "n"}]})");
        }) == "ValidationError");
  CHECK(thrown_kind([] { load_inventory(R"({"fabric": {"ports": 0}})"); }) == "ValidationError");
  CHECK(thrown_kind([] { load_inventory(R"({"licensed_bands": [{"low_hz": 5, "high_hz": 1}]})"); }) ==
        "ValidationError");
}

TEST_CASE("omitted fields take defaults") {
  const Inventory inv = load_inventory(R"({"sdr_devices": [{"id": "a", "node_id": "n"}],
                                          "compute_nodes": [{"id": "c"}]})");
  CHECK(inv.sdr_devices[0].max_instant_bw_hz == 160.0e6);
  CHECK(inv.sdr_devices[0].attachment == RadioPath::OverTheAir);
  CHECK(inv.compute_nodes[0].cores == 24);
  CHECK(inv.fabric.ports == 96);
}

TEST_CASE("json round trip and hash stability") {
  const Inventory inv = default_inventory();
  const Inventory back = inventory_from_json(to_json(inv));
  CHECK(back == inv);
  CHECK(inventory_hash(back) == inventory_hash(inv));
  Inventory changed = inv;
  changed.compute_nodes[3].cores = 23;
  CHECK(inventory_hash(changed) != inventory_hash(inv));
  CHECK(inventory_hash(inv).size() == 64);
}

TEST_CASE("shipped data/inventory.json equals the default pool") {
  CHECK(load_inventory_file(std::string(SDRBED_DATA_DIR) + "/inventory.json") == default_inventory());
}

TEST_CASE("band lookup") {
  const Inventory inv = default_inventory();
  CHECK(band_containing(inv, 400e6).has_value());
  CHECK(band_containing(inv, 138e6).has_value());
  CHECK(band_containing(inv, 3600e6).has_value());
  CHECK_FALSE(band_containing(inv, 5.0e9).has_value());
  CHECK_FALSE(band_containing(inv, 137.9e6).has_value());
}

TEST_CASE("lookups by id") {
  const Inventory inv = default_inventory();
  REQUIRE(inv.find_device("usrp-01"));
  CHECK(inv.find_device("usrp-01")->node_id == "rrh-01");
  CHECK(inv.find_device("nope") == nullptr);
  CHECK(inv.find_node("node-10"));
  CHECK(inv.knows_software("GNUradio"));
  CHECK_FALSE(inv.knows_software("Matlab"));
  std::set<std::string> nodes;
  for (const auto& d : inv.sdr_devices) nodes.insert(d.node_id);
  CHECK(nodes.size() == 8);
}
