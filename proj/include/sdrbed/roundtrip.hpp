#pragma once

#include <cstdint>
#include <vector>

#include "sdrbed/specvirt.hpp"

namespace sdrbed {

/// Sum of `tones` complex sinusoids with random frequency in
/// [-max_freq_hz, max_freq_hz], amplitude and phase, scaled to unit mean
/// power.
IqBuffer random_band_limited(double max_freq_hz, double rate_sps, std::size_t n, std::uint64_t seed,
                             int tones = 16);

struct RoundTripSlot {
  SpectrumSlot slot;
  double evm_dbc = 0.0;      ///< recovered vs. transmitted, edges excluded
  double leakage_dbc = 0.0;  ///< other slots' residue in this slot vs. its own power
};

/// Plans `n_slots` slots of random widths in a 320 MHz block, aggregates a
/// random band-limited signal per slot, disaggregates each slot and scores
/// it. The block carries `block_samples` samples.
std::vector<RoundTripSlot> roundtrip_trial(int n_slots, std::size_t block_samples, std::uint64_t seed,
                                           double stopband_atten_db = 60.0);

}  // namespace sdrbed
