#include "sdrbed/roundtrip.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "sdrbed/error.hpp"

namespace sdrbed {

IqBuffer random_band_limited(double max_freq_hz, double rate_sps, std::size_t n, std::uint64_t seed, int tones) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> freq(-max_freq_hz, max_freq_hz);
  std::uniform_real_distribution<double> amp(0.2, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  IqBuffer out{std::vector<Complex>(n), rate_sps, 0.0};
  for (int t = 0; t < tones; ++t) {
    const double w = 2.0 * std::numbers::pi * freq(rng) / rate_sps;
    const double a = amp(rng);
    const double p = phase(rng);
    for (std::size_t i = 0; i < n; ++i) out.samples[i] += std::polar(a, p + w * static_cast<double>(i));
  }
  double power = 0.0;
  for (const auto& v : out.samples) power += std::norm(v);
  if (power > 0) {
    const double scale = 1.0 / std::sqrt(power / static_cast<double>(n));
    for (auto& v : out.samples) v *= scale;
  }
  return out;
}

std::vector<RoundTripSlot> roundtrip_trial(int n_slots, std::size_t block_samples, std::uint64_t seed,
                                           double stopband_atten_db) {
  if (n_slots < 1) throw Error(ErrorKind::Validation, "need at least one slot", "slots");
  static constexpr double kWidths[] = {10e6, 20e6, 25e6, 40e6, 50e6};
  std::mt19937_64 rng(seed);
  SpectrumBlock block = make_block("roundtrip", 0.0);
  const double half = block.block_bw_hz / 2;
  for (int i = 0; i < n_slots; ++i) {
    const double bw = kWidths[std::uniform_int_distribution<int>(0, 4)(rng)];
    const double pref = std::uniform_real_distribution<double>(-half + bw / 2, half - bw / 2)(rng);
    block.slots.push_back(plan_spectrum_slots(block, {bw, pref, "slot-" + std::to_string(i)}));
  }
  const auto rate = static_cast<double>(block.sample_rate_sps);

  std::vector<IqBuffer> sent;
  std::vector<IqBuffer> lifted;
  IqBuffer composite{std::vector<Complex>(block_samples), rate, 0.0};
  for (const auto& slot : block.slots) {
    const auto k = static_cast<std::size_t>(block.sample_rate_sps / slot.slot_rate_sps);
    const std::size_t n = block_samples / k;
    sent.push_back(random_band_limited(0.45 * slot.bw_hz, static_cast<double>(slot.slot_rate_sps), n, rng(), 16));
    lifted.push_back(aggregate({{sent.back(), slot}}, block, block_samples, stopband_atten_db));
    for (std::size_t i = 0; i < block_samples; ++i) composite.samples[i] += lifted.back().samples[i];
  }

  std::vector<RoundTripSlot> out;
  for (std::size_t s = 0; s < block.slots.size(); ++s) {
    const auto& slot = block.slots[s];
    const auto k = static_cast<std::size_t>(block.sample_rate_sps / slot.slot_rate_sps);
    const FilterSpec f = default_slot_filter(slot, stopband_atten_db);
    const std::size_t skip = (design_lowpass(interpolation_filter(slot, stopband_atten_db), rate).size() +
                              design_lowpass(f, rate).size()) /
                                 (2 * k) +
                             2;
    const std::size_t n = sent[s].size();
    if (2 * skip >= n) throw Error(ErrorKind::Validation, "block too short for the slot filters", "block_samples");
    const std::size_t m = n - 2 * skip;

    IqBuffer others = composite;
    for (std::size_t i = 0; i < block_samples; ++i) others.samples[i] -= lifted[s].samples[i];
    const auto recovered = disaggregate(composite, slot, f);
    const auto residue = disaggregate(others, slot, f);

    const std::span<const Complex> ref(sent[s].samples.data() + skip, m);
    const std::span<const Complex> got(recovered.samples.data() + skip, m);
    double own = 0.0, leak = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      own += std::norm(ref[i]);
      leak += std::norm(residue.samples[skip + i]);
    }
    const double leakage = leak > 0 ? std::max(kEvmFloorDb, 10.0 * std::log10(leak / own)) : kEvmFloorDb;
    out.push_back({slot, evm_dbc(ref, got), leakage});
  }
  return out;
}

}  // namespace sdrbed
