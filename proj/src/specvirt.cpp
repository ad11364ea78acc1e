#include "sdrbed/specvirt.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sdrbed/error.hpp"

namespace sdrbed {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
// Extra attenuation designed in so the Kaiser estimate lands at or below the
// requested stopband level.
constexpr double kDesignMarginDb = 2.0;

double wrap_phase(double phi) {
  phi = std::remainder(phi, kTwoPi);
  return phi;
}

// Zero-order modified Bessel function of the first kind (power series).
double bessel_i0(double x) {
  double sum = 1.0, term = 1.0;
  const double q = x * x / 4.0;
  for (int k = 1; k < 200; ++k) {
    term *= q / (static_cast<double>(k) * k);
    sum += term;
    if (term < sum * 1e-17) break;
  }
  return sum;
}

void check_filter(const FilterSpec& f, double rate_sps) {
  if (!(f.cutoff_hz > 0) || !(f.transition_hz > 0))
    throw Error(ErrorKind::Validation, "filter cutoff and transition must be > 0", "filter");
  if (f.cutoff_hz + f.transition_hz > rate_sps / 2 * (1 + 1e-12))
    throw Error(ErrorKind::Validation, "filter cutoff + transition exceeds half the rate", "filter");
  if (f.taps != 0 && (f.taps < 1 || f.taps % 2 == 0))
    throw Error(ErrorKind::Validation, "filter tap count must be odd", "filter");
}

// Core polyphase resampler. `h` runs at rate*up; output index m samples the
// filtered high-rate stream at m*down + (taps-1)/2.
std::vector<Complex> polyphase(std::span<const Complex> x, int up, int down, std::span<const double> h, double gain) {
  const auto n_in = static_cast<std::int64_t>(x.size());
  const auto taps = static_cast<std::int64_t>(h.size());
  const std::int64_t delay = (taps - 1) / 2;
  const std::int64_t n_out = (n_in * up + down - 1) / down;
  std::vector<Complex> y(static_cast<std::size_t>(std::max<std::int64_t>(n_out, 0)));
  for (std::int64_t m = 0; m < n_out; ++m) {
    const std::int64_t c = m * down + delay;
    std::int64_t n_hi = c / up;
    if (n_hi > n_in - 1) n_hi = n_in - 1;
    std::int64_t lo = c - taps + 1;
    std::int64_t n_lo = lo <= 0 ? 0 : (lo + up - 1) / up;
    double re = 0.0, im = 0.0;
    for (std::int64_t n = n_lo; n <= n_hi; ++n) {
      const double tap = h[static_cast<std::size_t>(c - n * up)];
      const Complex& v = x[static_cast<std::size_t>(n)];
      re += tap * v.real();
      im += tap * v.imag();
    }
    y[static_cast<std::size_t>(m)] = {re * gain, im * gain};
  }
  return y;
}

// Multiplies by exp(j(phase0 + 2*pi*shift*n/rate)).
void mix_in_place(std::vector<Complex>& v, double shift_hz, double rate_sps, double phase0) {
  if (shift_hz == 0.0 && phase0 == 0.0) return;
  // Phasor recurrence, re-anchored to the exact phase every kAnchor samples
  // so rounding cannot accumulate.
  constexpr std::size_t kAnchor = 64;
  const double step = shift_hz / rate_sps;
  const Complex rot = std::polar(1.0, kTwoPi * step);
  for (std::size_t base = 0; base < v.size(); base += kAnchor) {
    const Complex w = std::polar(1.0, phase0 + kTwoPi * (step * static_cast<double>(base)));
    const std::size_t end = std::min(v.size(), base + kAnchor);
    double wr = w.real(), wi = w.imag();
    for (std::size_t n = base; n < end; ++n) {
      const double xr = v[n].real(), xi = v[n].imag();
      v[n] = {xr * wr - xi * wi, xr * wi + xi * wr};
      const double t = wr * rot.real() - wi * rot.imag();
      wi = wr * rot.imag() + wi * rot.real();
      wr = t;
    }
  }
}

}  // namespace

double kaiser_beta(double a) {
  if (a > 50.0) return 0.1102 * (a - 8.7);
  if (a >= 21.0) return 0.5842 * std::pow(a - 21.0, 0.4) + 0.07886 * (a - 21.0);
  return 0.0;
}

int kaiser_taps(double atten_db, double transition_hz, double rate_sps) {
  const double dw = kTwoPi * transition_hz / rate_sps;
  int n = static_cast<int>(std::ceil((atten_db - 7.95) / (2.285 * dw))) + 1;
  n = std::max(n, 3);
  if (n % 2 == 0) ++n;
  return n;
}

std::vector<double> design_lowpass(const FilterSpec& spec, double rate_sps) {
  check_filter(spec, rate_sps);
  const double atten = spec.stopband_atten_db + kDesignMarginDb;
  const int taps = spec.taps > 0 ? spec.taps : kaiser_taps(atten, spec.transition_hz, rate_sps);
  const double beta = kaiser_beta(atten);
  const double fc = (spec.cutoff_hz + spec.transition_hz / 2) / rate_sps;  // cycles/sample
  const double mid = (taps - 1) / 2.0;
  const double i0_beta = bessel_i0(beta);
  std::vector<double> h(static_cast<std::size_t>(taps));
  double sum = 0.0;
  for (int n = 0; n < taps; ++n) {
    const double t = n - mid;
    const double sinc = t == 0.0 ? 2 * fc : std::sin(kTwoPi * fc * t) / (std::numbers::pi * t);
    const double r = mid > 0 ? t / mid : 0.0;
    const double w = bessel_i0(beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
    h[static_cast<std::size_t>(n)] = sinc * w;
    sum += h[static_cast<std::size_t>(n)];
  }
  for (auto& v : h) v /= sum;
  return h;
}

IqBuffer mix_frequency(const IqBuffer& x, double shift_hz) {
  if (!(x.rate_sps > 0)) throw Error(ErrorKind::Rate, "buffer rate must be > 0", "rate_sps");
  if (!(std::abs(shift_hz) < x.rate_sps / 2))
    throw Error(ErrorKind::Shift, "shift of " + std::to_string(shift_hz) + " Hz aliases at " +
                                      std::to_string(x.rate_sps) + " sps");
  IqBuffer y{x.samples, x.rate_sps, 0.0};
  mix_in_place(y.samples, shift_hz, x.rate_sps, x.start_phase);
  y.start_phase =
      wrap_phase(x.start_phase + kTwoPi * (shift_hz / x.rate_sps * static_cast<double>(x.samples.size())));
  return y;
}

IqBuffer resample_integer(const IqBuffer& x, int up, int down, const FilterSpec& f) {
  if (up < 1 || down < 1) throw Error(ErrorKind::Validation, "up and down must be >= 1", "ratio");
  if (!(x.rate_sps > 0)) throw Error(ErrorKind::Rate, "buffer rate must be > 0", "rate_sps");
  if (up == 1 && down == 1) return x;
  const double hi_rate = x.rate_sps * up;
  const auto h = design_lowpass(f, hi_rate);
  IqBuffer y;
  y.rate_sps = hi_rate / down;
  y.start_phase = x.start_phase;
  y.samples = polyphase(x.samples, up, down, h, static_cast<double>(up));
  return y;
}

FilterSpec interpolation_filter(const SpectrumSlot& slot, double stopband_atten_db) {
  const double rate = static_cast<double>(slot.slot_rate_sps);
  const double cutoff = std::min(slot.bw_hz / 2, 0.45 * rate);
  // Stopband begins where the first image of the slot signal does.
  return {cutoff, rate - 2 * cutoff, stopband_atten_db, 0};
}

FilterSpec default_slot_filter(const SpectrumSlot& slot, double stopband_atten_db) {
  return {slot.bw_hz / 2, guard_band_hz(slot.bw_hz), stopband_atten_db, 0};
}

namespace {

bool slot_in_block(const SpectrumSlot& s, const SpectrumBlock& block) {
  return std::any_of(block.slots.begin(), block.slots.end(), [&](const SpectrumSlot& b) {
    return b.offset_hz == s.offset_hz && b.bw_hz == s.bw_hz && b.slot_rate_sps == s.slot_rate_sps &&
           b.owner == s.owner;
  });
}

}  // namespace

IqBuffer aggregate(const std::vector<std::pair<IqBuffer, SpectrumSlot>>& slot_signals, const SpectrumBlock& block,
                   std::size_t min_length, double stopband_atten_db) {
  const auto rate = static_cast<double>(block.sample_rate_sps);
  for (std::size_t i = 0; i < slot_signals.size(); ++i) {
    const auto& [sig, slot] = slot_signals[i];
    if (!slot_in_block(slot, block))
      throw Error(ErrorKind::Slot, "slot " + std::to_string(i) + " does not belong to the block", "slots");
    if (sig.rate_sps != static_cast<double>(slot.slot_rate_sps))
      throw Error(ErrorKind::Rate, "slot " + std::to_string(i) + " signal is not at the slot rate", "rate_sps");
    if (block.sample_rate_sps % slot.slot_rate_sps != 0)
      throw Error(ErrorKind::Rate, "slot rate does not divide the block rate", "slot_rate_sps");
    for (std::size_t j = i + 1; j < slot_signals.size(); ++j)
      if (!slots_separated(slot, slot_signals[j].second))
        throw Error(ErrorKind::Slot, "slots " + std::to_string(i) + " and " + std::to_string(j) + " overlap", "slots");
  }
  std::size_t length = min_length;
  for (const auto& [sig, slot] : slot_signals)
    length = std::max(length, sig.size() * static_cast<std::size_t>(block.sample_rate_sps / slot.slot_rate_sps));

  IqBuffer out{std::vector<Complex>(length), rate, 0.0};
  for (const auto& [sig, slot] : slot_signals) {
    const int k = static_cast<int>(block.sample_rate_sps / slot.slot_rate_sps);
    std::vector<Complex> lifted =
        k == 1 ? sig.samples
               : polyphase(sig.samples, k, 1, design_lowpass(interpolation_filter(slot, stopband_atten_db), rate),
                           static_cast<double>(k));
    mix_in_place(lifted, slot.offset_hz, rate, 0.0);
    for (std::size_t n = 0; n < lifted.size(); ++n) out.samples[n] += lifted[n];
  }
  return out;
}

IqBuffer disaggregate(const IqBuffer& block_signal, const SpectrumSlot& slot, const FilterSpec& f) {
  const double rate = block_signal.rate_sps;
  if (!(rate > 0) || slot.slot_rate_sps <= 0) throw Error(ErrorKind::Rate, "rates must be > 0", "rate_sps");
  const double ratio = rate / static_cast<double>(slot.slot_rate_sps);
  const double k_round = std::round(ratio);
  if (std::abs(ratio - k_round) > 1e-9 || k_round < 1)
    throw Error(ErrorKind::Rate, "block rate is not an integer multiple of the slot rate", "rate_sps");
  if (!(std::abs(slot.offset_hz) < rate / 2)) throw Error(ErrorKind::Shift, "slot offset aliases at the block rate");
  const int k = static_cast<int>(k_round);
  std::vector<Complex> shifted = block_signal.samples;
  mix_in_place(shifted, -slot.offset_hz, rate, 0.0);
  IqBuffer y;
  y.rate_sps = static_cast<double>(slot.slot_rate_sps);
  y.samples = polyphase(shifted, 1, k, design_lowpass(f, rate), 1.0);
  return y;
}

double evm_dbc(std::span<const Complex> reference, std::span<const Complex> test) {
  if (reference.size() != test.size())
    throw Error(ErrorKind::Validation, "reference and test lengths differ", "length");
  double err = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    err += std::norm(reference[i] - test[i]);
    ref += std::norm(reference[i]);
  }
  if (ref == 0.0) throw Error(ErrorKind::ZeroReference, "reference buffer has zero energy");
  if (err == 0.0) return kEvmFloorDb;
  return std::max(kEvmFloorDb, 10.0 * std::log10(err / ref));
}

double evm_dbc(const IqBuffer& reference, const IqBuffer& test) {
  if (reference.rate_sps != test.rate_sps) throw Error(ErrorKind::Rate, "reference and test rates differ", "rate_sps");
  return evm_dbc(std::span<const Complex>(reference.samples), std::span<const Complex>(test.samples));
}

}  // namespace sdrbed
