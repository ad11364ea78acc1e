#include "sdrbed/allocator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "sdrbed/error.hpp"

namespace sdrbed {

using nlohmann::json;

namespace {
// Slack for floating-point frequency and capacity comparisons.
constexpr double kHzEps = 1e-6;
constexpr double kQtyEps = 1e-9;
}  // namespace

int bytes_per_complex(SampleFormat f) {
  switch (f) {
    case SampleFormat::SC16: return 4;
    case SampleFormat::SC8: return 2;
    case SampleFormat::Float64: return 16;
  }
  return 0;
}

std::string_view to_string(SampleFormat f) {
  switch (f) {
    case SampleFormat::SC16: return "SC16";
    case SampleFormat::SC8: return "SC8";
    case SampleFormat::Float64: return "float64";
  }
  return "?";
}

SampleFormat sample_format_from_string(std::string_view text) {
  if (text == "SC16" || text == "sc16") return SampleFormat::SC16;
  if (text == "SC8" || text == "sc8") return SampleFormat::SC8;
  if (text == "float64" || text == "FLOAT64" || text == "f64") return SampleFormat::Float64;
  throw Error(ErrorKind::Validation, "unknown sample format '" + std::string(text) + "'", "format");
}

double guard_band_hz(double bw_hz) { return std::max(0.1 * bw_hz, 100.0e3); }

std::int64_t default_block_rate(double block_bw_hz) {
  constexpr double kStep = 8.0e6;
  return static_cast<std::int64_t>(std::ceil(1.25 * block_bw_hz / kStep - 1e-12) * kStep);
}

std::int64_t slot_rate_for(std::int64_t block_rate_sps, double bw_hz) {
  if (bw_hz <= 0 || static_cast<double>(block_rate_sps) < bw_hz) {
    throw Error(ErrorKind::Validation, "slot bandwidth exceeds block sample rate", "bw_hz");
  }
  for (double oversample : {1.25, 1.0}) {
    auto k = static_cast<std::int64_t>(std::floor(static_cast<double>(block_rate_sps) / (oversample * bw_hz)));
    for (; k >= 1; --k) {
      if (block_rate_sps % k == 0) return block_rate_sps / k;
    }
  }
  return block_rate_sps;
}

SpectrumBlock make_block(std::string node_id, double center_hz, double block_bw_hz,
                         std::optional<std::int64_t> sample_rate_sps, SampleFormat format) {
  SpectrumBlock b;
  b.node_id = std::move(node_id);
  b.center_hz = center_hz;
  b.block_bw_hz = block_bw_hz;
  b.sample_rate_sps = sample_rate_sps.value_or(default_block_rate(block_bw_hz));
  b.sample_format = format;
  validate(b);
  return b;
}

bool slots_separated(const SpectrumSlot& a, const SpectrumSlot& b) {
  const double need = (a.bw_hz + b.bw_hz) / 2 + std::max(guard_band_hz(a.bw_hz), guard_band_hz(b.bw_hz));
  return std::abs(a.offset_hz - b.offset_hz) >= need - kHzEps;
}

namespace {

bool inside_block(const SpectrumBlock& block, double offset_hz, double bw_hz) {
  const double half = block.block_bw_hz / 2;
  return offset_hz - bw_hz / 2 >= -half - kHzEps && offset_hz + bw_hz / 2 <= half + kHzEps;
}

}  // namespace

void validate(const SpectrumBlock& block) {
  if (!(block.block_bw_hz > 0)) throw Error(ErrorKind::Validation, "block_bw_hz must be > 0", "block_bw_hz");
  if (static_cast<double>(block.sample_rate_sps) < block.block_bw_hz)
    throw Error(ErrorKind::Validation, "sample_rate_sps must be >= block_bw_hz", "sample_rate_sps");
  for (std::size_t i = 0; i < block.slots.size(); ++i) {
    const auto& s = block.slots[i];
    if (!(s.bw_hz > 0)) throw Error(ErrorKind::Validation, "slot bandwidth must be > 0", "slots");
    if (!inside_block(block, s.offset_hz, s.bw_hz))
      throw Error(ErrorKind::Validation, "slot " + std::to_string(i) + " extends past the block edge", "slots");
    if (s.slot_rate_sps <= 0 || static_cast<double>(s.slot_rate_sps) < s.bw_hz ||
        block.sample_rate_sps % s.slot_rate_sps != 0)
      throw Error(ErrorKind::Validation, "slot " + std::to_string(i) + " rate does not divide the block rate",
                  "slot_rate_sps");
    for (std::size_t j = i + 1; j < block.slots.size(); ++j) {
      if (!slots_separated(s, block.slots[j]))
        throw Error(ErrorKind::Validation,
                    "slots " + std::to_string(i) + " and " + std::to_string(j) + " violate the guard band", "slots");
    }
  }
}

SpectrumSlot plan_spectrum_slots(const SpectrumBlock& block, const SlotRequest& request) {
  if (!(request.bw_hz > 0)) throw Error(ErrorKind::Validation, "requested bandwidth must be > 0", "bw_hz");
  SpectrumSlot slot;
  slot.bw_hz = request.bw_hz;
  slot.owner = request.owner;
  if (request.bw_hz > block.block_bw_hz + kHzEps)
    throw Error(ErrorKind::NoFit, "slot wider than the block", "spectrum");
  slot.slot_rate_sps = slot_rate_for(block.sample_rate_sps, request.bw_hz);

  auto fits = [&](double offset) {
    if (!inside_block(block, offset, request.bw_hz)) return false;
    SpectrumSlot probe = slot;
    probe.offset_hz = offset;
    return std::all_of(block.slots.begin(), block.slots.end(),
                       [&](const SpectrumSlot& s) { return slots_separated(probe, s); });
  };

  if (request.preferred_offset_hz && fits(*request.preferred_offset_hz)) {
    slot.offset_hz = *request.preferred_offset_hz;
    return slot;
  }
  // The lowest feasible offset either touches the lower block edge or sits
  // exactly one guard band above an existing slot.
  std::vector<double> candidates{-block.block_bw_hz / 2 + request.bw_hz / 2};
  for (const auto& s : block.slots) {
    candidates.push_back(s.high_hz() + std::max(guard_band_hz(s.bw_hz), guard_band_hz(request.bw_hz)) +
                         request.bw_hz / 2);
  }
  std::sort(candidates.begin(), candidates.end());
  for (double c : candidates) {
    if (fits(c)) {
      slot.offset_hz = c;
      return slot;
    }
  }
  throw Error(ErrorKind::NoFit, "no contiguous spectrum of " + std::to_string(request.bw_hz) + " Hz left in block",
              "spectrum");
}

ThroughputResult throughput_check(const SpectrumBlock& block, const NetworkFabric& fabric, int n_streams) {
  const double required = static_cast<double>(block.sample_rate_sps) * bytes_per_complex(block.sample_format) * 8.0 *
                          static_cast<double>(n_streams);
  return {required <= fabric.port_rate_bps, required};
}

std::vector<VmDemand> split_compute(const ComputeRequest& req, const Inventory& inv) {
  if (req.empty()) return {};
  int max_cores = 0;
  double max_ram = 0, max_storage = 0;
  for (const auto& n : inv.compute_nodes) {
    max_cores = std::max(max_cores, n.cores);
    max_ram = std::max(max_ram, n.ram_gb);
    max_storage = std::max(max_storage, n.storage_gb);
  }
  auto pieces_for = [](double want, double per_node) -> std::int64_t {
    if (want <= 0 || per_node <= 0) return 1;
    return static_cast<std::int64_t>(std::ceil(want / per_node - 1e-12));
  };
  const std::int64_t n = std::max<std::int64_t>(
      {1, pieces_for(req.cpu_cores, max_cores), pieces_for(req.ram_gb, max_ram), pieces_for(req.storage_gb, max_storage)});
  std::vector<VmDemand> vms(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    auto& vm = vms[static_cast<std::size_t>(i)];
    vm.cores = static_cast<int>(req.cpu_cores / n + (i < req.cpu_cores % n ? 1 : 0));
    vm.ram_gb = req.ram_gb / static_cast<double>(n);
    vm.storage_gb = req.storage_gb / static_cast<double>(n);
    vm.lifetime_s = req.vm_lifetime_s;
  }
  return vms;
}

std::vector<NodeCapacity> node_capacities(const Inventory& inv) {
  std::vector<NodeCapacity> out;
  for (const auto& n : inv.compute_nodes) out.push_back({n.id, n.cores, n.ram_gb, n.storage_gb});
  return out;
}

std::optional<std::vector<std::size_t>> place_first_fit_decreasing(std::vector<NodeCapacity>& nodes,
                                                                   const std::vector<VmDemand>& vms) {
  std::vector<std::size_t> order(vms.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (vms[a].ram_gb != vms[b].ram_gb) return vms[a].ram_gb > vms[b].ram_gb;
    return vms[a].cores > vms[b].cores;
  });
  auto work = nodes;
  std::vector<std::size_t> where(vms.size());
  for (std::size_t idx : order) {
    const auto& vm = vms[idx];
    auto it = std::find_if(work.begin(), work.end(), [&](const NodeCapacity& n) {
      return n.cores >= vm.cores && n.ram_gb + kQtyEps >= vm.ram_gb && n.storage_gb + kQtyEps >= vm.storage_gb;
    });
    if (it == work.end()) return std::nullopt;
    it->cores -= vm.cores;
    it->ram_gb -= vm.ram_gb;
    it->storage_gb -= vm.storage_gb;
    where[idx] = static_cast<std::size_t>(it - work.begin());
  }
  nodes = std::move(work);
  return where;
}

bool compute_feasible(const Inventory& inv, const std::vector<const ComputeRequest*>& requests) {
  std::vector<VmDemand> all;
  for (const auto* r : requests) {
    auto vms = split_compute(*r, inv);
    all.insert(all.end(), vms.begin(), vms.end());
  }
  if (all.empty()) return true;
  auto nodes = node_capacities(inv);
  return place_first_fit_decreasing(nodes, all).has_value();
}

ResourceTotals ResourceTotals::operator+(const ResourceTotals& o) const {
  return {sdr_over_the_air + o.sdr_over_the_air, sdr_emulator + o.sdr_emulator, cores + o.cores,
          ram_gb + o.ram_gb,                     storage_gb + o.storage_gb,     network_bps + o.network_bps};
}

ResourceTotals inventory_totals(const Inventory& inv) {
  ResourceTotals t;
  t.sdr_over_the_air = static_cast<double>(inv.device_count(RadioPath::OverTheAir));
  t.sdr_emulator = static_cast<double>(inv.device_count(RadioPath::Emulator));
  for (const auto& n : inv.compute_nodes) {
    t.cores += n.cores;
    t.ram_gb += n.ram_gb;
    t.storage_gb += n.storage_gb;
  }
  t.network_bps = inv.fabric.capacity_bps();
  return t;
}

Allocator::Allocator(InventoryPtr inv) : inv_(std::move(inv)) {}

const Allocation* Allocator::find(const std::string& reservation_id) const {
  auto it = live_.find(reservation_id);
  return it == live_.end() ? nullptr : &it->second;
}

Allocation Allocator::bind(const Reservation& res) {
  if (res.state != ReservationState::Confirmed)
    throw Error(ErrorKind::State, "reservation " + res.id + " is " + std::string(to_string(res.state)) +
                                      ", bind requires Confirmed");
  if (live_.count(res.id)) throw Error(ErrorKind::State, "reservation " + res.id + " is already bound");
  const Inventory& inv = *inv_;
  Allocation alloc;
  alloc.reservation_id = res.id;
  alloc.path = res.spec.radio.path;

  // Devices: first free devices on the requested medium, inventory order.
  std::set<std::string> busy;
  for (const auto& [id, a] : live_) busy.insert(a.devices.begin(), a.devices.end());
  for (const auto& d : inv.sdr_devices) {
    if (static_cast<int>(alloc.devices.size()) >= res.spec.radio.n_usrps) break;
    if (d.attachment == alloc.path && !busy.count(d.id)) alloc.devices.push_back(d.id);
  }
  if (static_cast<int>(alloc.devices.size()) < res.spec.radio.n_usrps)
    throw Error(ErrorKind::Allocation, "not enough free " + std::string(to_string(alloc.path)) + " SDR devices",
                "devices");

  // Compute: VMs placed first-fit-decreasing by RAM on remaining capacity.
  auto nodes = node_capacities(inv);
  for (const auto& [id, a] : live_) {
    for (const auto& vm : a.vm_placements) {
      auto it = std::find_if(nodes.begin(), nodes.end(), [&](auto& n) { return n.node_id == vm.compute_node_id; });
      if (it == nodes.end()) continue;
      it->cores -= vm.cores;
      it->ram_gb -= vm.ram_gb;
      it->storage_gb -= vm.storage_gb;
    }
  }
  const auto vms = split_compute(res.spec.compute, inv);
  auto where = place_first_fit_decreasing(nodes, vms);
  if (!where) throw Error(ErrorKind::Allocation, "no compute node can host the requested VMs", "compute");
  for (std::size_t i = 0; i < vms.size(); ++i) {
    alloc.vm_placements.push_back(
        {nodes[(*where)[i]].node_id, vms[i].cores, vms[i].ram_gb, vms[i].storage_gb, vms[i].lifetime_s});
  }

  // Network budget against the whole fabric.
  double reserved = 0;
  for (const auto& [id, a] : live_) reserved += a.network_bps_reserved;
  if (res.spec.network.requested_bps > inv.fabric.capacity_bps() - reserved + kQtyEps)
    throw Error(ErrorKind::Allocation, "fabric bandwidth exhausted", "network");
  alloc.network_bps_reserved = res.spec.network.requested_bps;

  // Spectrum: one slot per channel in the block of the serving device's node.
  auto blocks = blocks_;
  const auto& channels = res.spec.radio.channels;
  if (!channels.empty() && alloc.devices.empty())
    throw Error(ErrorKind::Allocation, "channels requested without any SDR device", "devices");
  for (std::size_t i = 0; i < channels.size(); ++i) {
    const auto* dev = inv.find_device(alloc.devices[i % alloc.devices.size()]);
    const std::string& node = dev->node_id;
    auto it = blocks.find(node);
    if (it == blocks.end()) {
      double node_bw = 0;
      for (const auto& d : inv.sdr_devices)
        if (d.node_id == node) node_bw += d.max_instant_bw_hz;
      const double bw = std::min(kDefaultBlockCapHz, node_bw);
      if (channels[i].bw_hz > bw + kHzEps)
        throw Error(ErrorKind::Allocation, "channel wider than node " + node + " can carry", "spectrum");
      it = blocks.emplace(node, make_block(node, channels[i].center_hz, bw)).first;
    }
    SpectrumBlock& block = it->second;
    try {
      auto slot = plan_spectrum_slots(block, {channels[i].bw_hz, channels[i].center_hz - block.center_hz, res.id});
      block.slots.push_back(slot);
      alloc.slots.push_back({node, block.center_hz, slot});
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NoFit) throw;
      throw Error(ErrorKind::Allocation, std::string("spectrum: ") + e.what(), "spectrum");
    }
  }

  blocks_ = std::move(blocks);
  live_.emplace(res.id, alloc);
  return alloc;
}

void Allocator::release(const Allocation& alloc) { release(alloc.reservation_id); }

void Allocator::release(const std::string& reservation_id) {
  auto it = live_.find(reservation_id);
  if (it == live_.end()) return;
  for (const auto& binding : it->second.slots) {
    auto b = blocks_.find(binding.node_id);
    if (b == blocks_.end()) continue;
    auto& slots = b->second.slots;
    slots.erase(std::remove_if(slots.begin(), slots.end(),
                               [&](const SpectrumSlot& s) { return s.owner == reservation_id; }),
                slots.end());
    if (slots.empty()) blocks_.erase(b);
  }
  live_.erase(it);
}

ResourceTotals Allocator::held() const {
  ResourceTotals t;
  for (const auto& [id, a] : live_) {
    const double n = static_cast<double>(a.devices.size());
    (a.path == RadioPath::OverTheAir ? t.sdr_over_the_air : t.sdr_emulator) += n;
    for (const auto& vm : a.vm_placements) {
      t.cores += vm.cores;
      t.ram_gb += vm.ram_gb;
      t.storage_gb += vm.storage_gb;
    }
    t.network_bps += a.network_bps_reserved;
  }
  return t;
}

ResourceTotals Allocator::free() const {
  const auto total = inventory_totals(*inv_);
  const auto h = held();
  return {total.sdr_over_the_air - h.sdr_over_the_air, total.sdr_emulator - h.sdr_emulator, total.cores - h.cores,
          total.ram_gb - h.ram_gb, total.storage_gb - h.storage_gb, total.network_bps - h.network_bps};
}

void Allocator::reset_inventory(InventoryPtr inv) {
  if (!live_.empty()) throw Error(ErrorKind::State, "cannot replace the inventory while allocations are live");
  inv_ = std::move(inv);
  blocks_.clear();
}

json to_json(const SpectrumBlock& b) {
  json slots = json::array();
  for (const auto& s : b.slots)
    slots.push_back(
        {{"offset_hz", s.offset_hz}, {"bw_hz", s.bw_hz}, {"owner", s.owner}, {"slot_rate_sps", s.slot_rate_sps}});
  return {{"node_id", b.node_id},
          {"center_hz", b.center_hz},
          {"block_bw_hz", b.block_bw_hz},
          {"sample_rate_sps", b.sample_rate_sps},
          {"sample_format", std::string(to_string(b.sample_format))},
          {"slots", slots}};
}

json to_json(const Allocation& a) {
  json vms = json::array();
  for (const auto& vm : a.vm_placements)
    vms.push_back({{"compute_node_id", vm.compute_node_id},
                   {"cores", vm.cores},
                   {"ram_gb", vm.ram_gb},
                   {"storage_gb", vm.storage_gb},
                   {"lifetime_s", vm.lifetime_s}});
  json slots = json::array();
  for (const auto& s : a.slots)
    slots.push_back({{"node_id", s.node_id},
                     {"block_center_hz", s.block_center_hz},
                     {"offset_hz", s.slot.offset_hz},
                     {"bw_hz", s.slot.bw_hz},
                     {"slot_rate_sps", s.slot.slot_rate_sps}});
  return {{"reservation_id", a.reservation_id},
          {"path", std::string(to_string(a.path))},
          {"devices", a.devices},
          {"vm_placements", vms},
          {"slots", slots},
          {"network_bps_reserved", a.network_bps_reserved}};
}

PipelinePlacement place_pipeline(const PipelineGraph& g, const Inventory& inv, const std::vector<Allocation>& live) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < g.tasks.size(); ++i) {
    if (!index.emplace(g.tasks[i].id, i).second)
      throw Error(ErrorKind::Validation, "duplicate task id '" + g.tasks[i].id + "'", "tasks");
    if (g.tasks[i].cores < 0 || g.tasks[i].ram_gb < 0)
      throw Error(ErrorKind::Validation, "task '" + g.tasks[i].id + "' has a negative demand", "tasks");
  }
  std::vector<std::vector<std::size_t>> in_edges(g.tasks.size());
  std::vector<int> indegree(g.tasks.size(), 0);
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto& edge = g.edges[e];
    if (!index.count(edge.src) || !index.count(edge.dst))
      throw Error(ErrorKind::Validation, "edge references an unknown task", "edges");
    if (edge.rate_bps < 0) throw Error(ErrorKind::Validation, "edge rate must be >= 0", "edges");
    in_edges[index[edge.dst]].push_back(e);
    ++indegree[index[edge.dst]];
  }
  // Kahn's algorithm, ties broken by declaration order.
  std::vector<std::size_t> order;
  std::vector<bool> done(g.tasks.size(), false);
  while (order.size() < g.tasks.size()) {
    std::size_t pick = g.tasks.size();
    for (std::size_t i = 0; i < g.tasks.size(); ++i) {
      if (!done[i] && indegree[i] == 0) {
        pick = i;
        break;
      }
    }
    if (pick == g.tasks.size()) throw Error(ErrorKind::Validation, "pipeline graph has a cycle", "edges");
    done[pick] = true;
    order.push_back(pick);
    for (const auto& edge : g.edges)
      if (edge.src == g.tasks[pick].id) --indegree[index[edge.dst]];
  }

  auto nodes = node_capacities(inv);
  for (const auto& a : live) {
    for (const auto& vm : a.vm_placements) {
      for (auto& n : nodes) {
        if (n.node_id == vm.compute_node_id) {
          n.cores -= vm.cores;
          n.ram_gb -= vm.ram_gb;
        }
      }
    }
  }
  std::vector<double> port_left(nodes.size(), inv.fabric.port_rate_bps);
  std::vector<std::size_t> placed(g.tasks.size(), nodes.size());
  PipelinePlacement out;

  for (std::size_t t : order) {
    const auto& task = g.tasks[t];
    std::vector<std::size_t> candidates;
    auto incoming = in_edges[t];
    std::stable_sort(incoming.begin(), incoming.end(),
                     [&](std::size_t a, std::size_t b) { return g.edges[a].rate_bps > g.edges[b].rate_bps; });
    for (std::size_t e : incoming) candidates.push_back(placed[index[g.edges[e].src]]);
    for (std::size_t n = 0; n < nodes.size(); ++n) candidates.push_back(n);

    bool ok = false;
    for (std::size_t n : candidates) {
      if (nodes[n].cores < task.cores || nodes[n].ram_gb + kQtyEps < task.ram_gb) continue;
      std::vector<double> charge(nodes.size(), 0.0);
      for (std::size_t e : in_edges[t]) {
        const std::size_t src_node = placed[index[g.edges[e].src]];
        if (src_node == n) continue;
        charge[n] += g.edges[e].rate_bps;
        charge[src_node] += g.edges[e].rate_bps;
      }
      bool budget = true;
      for (std::size_t k = 0; k < nodes.size(); ++k)
        if (charge[k] > port_left[k] + kQtyEps) budget = false;
      if (!budget) continue;
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        port_left[k] -= charge[k];
        if (charge[k] > 0) out.port_charge_bps[nodes[k].node_id] += charge[k];
      }
      for (std::size_t e : in_edges[t])
        if (placed[index[g.edges[e].src]] != n) out.network_bps += g.edges[e].rate_bps;
      nodes[n].cores -= task.cores;
      nodes[n].ram_gb -= task.ram_gb;
      placed[t] = n;
      out.task_node[task.id] = nodes[n].node_id;
      ok = true;
      break;
    }
    if (!ok) throw Error(ErrorKind::Placement, "no node can host task '" + task.id + "'", task.id);
  }
  return out;
}

json to_json(const PipelinePlacement& p) {
  return {{"task_node", p.task_node}, {"port_charge_bps", p.port_charge_bps}, {"network_bps", p.network_bps}};
}

PipelineGraph pipeline_from_json(const json& j) {
  PipelineGraph g;
  try {
    for (const auto& t : j.at("tasks"))
      g.tasks.push_back({t.at("id").get<std::string>(), t.value("cores", 0), t.value("ram_gb", 0.0)});
    if (j.contains("edges")) {
      for (const auto& e : j.at("edges"))
        g.edges.push_back({e.at("src").get<std::string>(), e.at("dst").get<std::string>(), e.value("rate_bps", 0.0)});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Validation, std::string("pipeline graph: ") + e.what(), "pipeline");
  }
  return g;
}

}  // namespace sdrbed
