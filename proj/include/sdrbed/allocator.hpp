#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdrbed/inventory.hpp"
#include "sdrbed/reservation.hpp"

namespace sdrbed {

/// Wire format of complex samples. Float64 exists only for files.
enum class SampleFormat { SC16, SC8, Float64 };

int bytes_per_complex(SampleFormat f);
std::string_view to_string(SampleFormat f);
SampleFormat sample_format_from_string(std::string_view text);

/// Largest block a dual-device node may carry.
inline constexpr double kDefaultBlockCapHz = 320.0e6;

/// Guard band between adjacent slots: max(10 % of the slot bandwidth, 100 kHz).
double guard_band_hz(double bw_hz);

/// 1.25 x block bandwidth rounded up to a multiple of 8 MHz.
std::int64_t default_block_rate(double block_bw_hz);

/// Highest integer divisor rate of `block_rate_sps` that still leaves 25 %
/// oversampling over `bw_hz` (or at least `bw_hz` when that is impossible).
std::int64_t slot_rate_for(std::int64_t block_rate_sps, double bw_hz);

struct SpectrumSlot {
  double offset_hz = 0.0;  ///< slot center relative to the block center
  double bw_hz = 0.0;
  std::string owner;
  std::int64_t slot_rate_sps = 0;

  double low_hz() const { return offset_hz - bw_hz / 2; }
  double high_hz() const { return offset_hz + bw_hz / 2; }

  bool operator==(const SpectrumSlot&) const = default;
};

struct SpectrumBlock {
  std::string node_id;
  double center_hz = 0.0;
  double block_bw_hz = kDefaultBlockCapHz;
  std::int64_t sample_rate_sps = 0;
  SampleFormat sample_format = SampleFormat::SC16;
  std::vector<SpectrumSlot> slots;

  bool operator==(const SpectrumBlock&) const = default;
};

SpectrumBlock make_block(std::string node_id, double center_hz, double block_bw_hz = kDefaultBlockCapHz,
                         std::optional<std::int64_t> sample_rate_sps = std::nullopt,
                         SampleFormat format = SampleFormat::SC16);

/// Throws Error(Validation) when rate, slot placement or guard spacing is violated.
void validate(const SpectrumBlock& block);

/// True iff the two slots keep the required guard distance.
bool slots_separated(const SpectrumSlot& a, const SpectrumSlot& b);

struct SlotRequest {
  double bw_hz = 0.0;
  std::optional<double> preferred_offset_hz;
  std::string owner;
};

/// Plans (but does not insert) a slot: the preferred offset when it fits,
/// otherwise the lowest feasible offset. Throws Error(NoFit).
SpectrumSlot plan_spectrum_slots(const SpectrumBlock& block, const SlotRequest& request);

struct ThroughputResult {
  bool fits = false;
  double required_bps = 0.0;

  bool operator==(const ThroughputResult&) const = default;
};

ThroughputResult throughput_check(const SpectrumBlock& block, const NetworkFabric& fabric, int n_streams);

struct VmPlacement {
  std::string compute_node_id;
  int cores = 0;
  double ram_gb = 0.0;
  double storage_gb = 0.0;
  std::int64_t lifetime_s = 0;

  bool operator==(const VmPlacement&) const = default;
};

struct SlotBinding {
  std::string node_id;
  double block_center_hz = 0.0;
  SpectrumSlot slot;

  bool operator==(const SlotBinding&) const = default;
};

struct Allocation {
  std::string reservation_id;
  RadioPath path = RadioPath::OverTheAir;
  std::vector<std::string> devices;
  std::vector<VmPlacement> vm_placements;
  std::vector<SlotBinding> slots;
  double network_bps_reserved = 0.0;

  bool operator==(const Allocation&) const = default;
};

nlohmann::json to_json(const Allocation& a);
nlohmann::json to_json(const SpectrumBlock& b);

/// One VM-sized piece of a compute request.
struct VmDemand {
  int cores = 0;
  double ram_gb = 0.0;
  double storage_gb = 0.0;
  std::int64_t lifetime_s = 0;
};

/// Splits a compute request into the fewest equal VMs that each fit the
/// largest node. Empty requests yield no VMs.
std::vector<VmDemand> split_compute(const ComputeRequest& req, const Inventory& inv);

/// Per-node free capacity used by the placement heuristics.
struct NodeCapacity {
  std::string node_id;
  int cores = 0;
  double ram_gb = 0.0;
  double storage_gb = 0.0;
};

std::vector<NodeCapacity> node_capacities(const Inventory& inv);

/// First-fit-decreasing by RAM. Returns the node index per VM (in input
/// order) or nullopt when some VM does not fit. `nodes` is updated only on
/// success.
std::optional<std::vector<std::size_t>> place_first_fit_decreasing(std::vector<NodeCapacity>& nodes,
                                                                   const std::vector<VmDemand>& vms);

/// Whether all `requests` can run at once on an otherwise idle cluster.
bool compute_feasible(const Inventory& inv, const std::vector<const ComputeRequest*>& requests);

/// Totals per resource class, used for conservation accounting.
struct ResourceTotals {
  double sdr_over_the_air = 0.0;
  double sdr_emulator = 0.0;
  double cores = 0.0;
  double ram_gb = 0.0;
  double storage_gb = 0.0;
  double network_bps = 0.0;

  ResourceTotals operator+(const ResourceTotals& o) const;
  bool operator==(const ResourceTotals&) const = default;
};

ResourceTotals inventory_totals(const Inventory& inv);

/// Binds confirmed reservations to concrete resources and tracks what is
/// held. Not thread-safe; callers serialize through the scheduler.
class Allocator {
 public:
  explicit Allocator(InventoryPtr inv);

  /// Throws Error(State) unless `res` is Confirmed, Error(Allocation) naming
  /// the exhausted class otherwise. Leaves no partial state on failure.
  Allocation bind(const Reservation& res);
  /// Returns everything `alloc` holds. Releasing an allocation that is not
  /// live is a no-op.
  void release(const Allocation& alloc);
  void release(const std::string& reservation_id);

  const std::map<std::string, Allocation>& live() const { return live_; }
  const std::map<std::string, SpectrumBlock>& blocks() const { return blocks_; }
  const Allocation* find(const std::string& reservation_id) const;

  ResourceTotals held() const;
  ResourceTotals free() const;
  const Inventory& inventory() const { return *inv_; }

  /// Replaces the inventory. Throws Error(State) while allocations are live.
  void reset_inventory(InventoryPtr inv);

 private:
  InventoryPtr inv_;
  std::map<std::string, Allocation> live_;
  std::map<std::string, SpectrumBlock> blocks_;
};

struct PipelineTask {
  std::string id;
  int cores = 0;
  double ram_gb = 0.0;
};

struct PipelineEdge {
  std::string src;
  std::string dst;
  double rate_bps = 0.0;
};

struct PipelineGraph {
  std::vector<PipelineTask> tasks;
  std::vector<PipelineEdge> edges;
};

struct PipelinePlacement {
  std::map<std::string, std::string> task_node;
  /// Port budget consumed per compute node by edges that cross nodes.
  std::map<std::string, double> port_charge_bps;
  double network_bps = 0.0;
};

/// Greedy topological placement: each task goes to the node of its
/// heaviest already-placed predecessor when it fits, else to the first node
/// with room. Throws Error(Validation) for cyclic graphs and
/// Error(Placement) when the heuristic finds no assignment.
PipelinePlacement place_pipeline(const PipelineGraph& g, const Inventory& inv,
                                  const std::vector<Allocation>& live);

nlohmann::json to_json(const PipelinePlacement& p);
PipelineGraph pipeline_from_json(const nlohmann::json& j);

}  // namespace sdrbed
