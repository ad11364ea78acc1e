#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "sdrbed/scheduler.hpp"

namespace testsupport {

inline bool holds(const sdrbed::Reservation& r) {
  return r.state == sdrbed::ReservationState::Confirmed || r.state == sdrbed::ReservationState::Active;
}

/// Brute-force overbooking count: at every window start, sums the demand of
/// every holding reservation whose window covers it, and checks every pair of
/// holders for overlapping channels on a shared medium.
inline std::size_t booking_violations(const sdrbed::Calendar& cal, const sdrbed::Inventory& inv) {
  using namespace sdrbed;
  std::vector<const Reservation*> h;
  for (const auto& [id, r] : cal)
    if (holds(r)) h.push_back(&r);
  double ota = 0, emu = 0, cores = 0, ram = 0;
  for (const auto& d : inv.sdr_devices) (d.attachment == RadioPath::OverTheAir ? ota : emu) += 1;
  for (const auto& n : inv.compute_nodes) {
    cores += n.cores;
    ram += n.ram_gb;
  }
  const double fabric = inv.fabric.ports * inv.fabric.port_rate_bps;
  std::size_t bad = 0;
  std::set<Timestamp> points;
  for (const auto* r : h) points.insert(r->window.start_utc);
  for (Timestamp t : points) {
    double o = 0, e = 0, c = 0, m = 0, n = 0;
    for (const auto* r : h) {
      if (!(r->window.start_utc <= t && t < r->window.end_utc)) continue;
      (r->spec.radio.path == RadioPath::OverTheAir ? o : e) += r->spec.radio.n_usrps;
      c += r->spec.compute.cpu_cores;
      m += r->spec.compute.ram_gb;
      n += r->spec.network.requested_bps;
    }
    if (o > ota || e > emu || c > cores || m > ram + 1e-9 || n > fabric) ++bad;
  }
  for (std::size_t i = 0; i < h.size(); ++i) {
    for (std::size_t j = i + 1; j < h.size(); ++j) {
      const auto& a = *h[i];
      const auto& b = *h[j];
      if (!(a.window.start_utc < b.window.end_utc && b.window.start_utc < a.window.end_utc)) continue;
      if (a.spec.radio.path != b.spec.radio.path) continue;
      for (const auto& x : a.spec.radio.channels)
        for (const auto& y : b.spec.radio.channels)
          if (x.center_hz - x.bw_hz / 2 < y.center_hz + y.bw_hz / 2 &&
              y.center_hz - y.bw_hz / 2 < x.center_hz + x.bw_hz / 2)
            ++bad;
    }
  }
  return bad;
}

/// Devices held by more than one live allocation.
inline std::size_t device_double_holds(const sdrbed::Allocator& a) {
  std::map<std::string, int> count;
  for (const auto& [id, alloc] : a.live())
    for (const auto& d : alloc.devices) ++count[d];
  std::size_t bad = 0;
  for (const auto& [d, c] : count)
    if (c > 1) ++bad;
  return bad;
}

/// The audit trail is a legal walk from Requested ending in the current
/// state, with non-decreasing timestamps.
inline bool audit_legal(const sdrbed::Reservation& r) {
  using namespace sdrbed;
  ReservationState at = ReservationState::Requested;
  Timestamp last = r.audit.empty() ? 0 : r.audit.front().t_utc;
  for (const auto& e : r.audit) {
    if (e.from != at || e.t_utc < last) return false;
    if (e.from != e.to && !transition_allowed(e.from, e.to)) return false;
    at = e.to;
    last = e.t_utc;
  }
  return at == r.state;
}

}  // namespace testsupport
