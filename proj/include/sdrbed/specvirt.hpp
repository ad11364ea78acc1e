#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "sdrbed/allocator.hpp"

namespace sdrbed {

using Complex = std::complex<double>;

/// Complex baseband samples. `start_phase` is the oscillator phase the
/// mixer applies to the first sample; `mix_frequency` returns a buffer whose
/// `start_phase` is the phase owed to the next contiguous buffer.
struct IqBuffer {
  std::vector<Complex> samples;
  double rate_sps = 0.0;
  double start_phase = 0.0;

  std::size_t size() const { return samples.size(); }
};

/// Low-pass prototype. `taps == 0` lets the Kaiser formula size the filter.
struct FilterSpec {
  double cutoff_hz = 0.0;      ///< passband edge
  double transition_hz = 0.0;  ///< passband edge to stopband edge
  double stopband_atten_db = 60.0;
  int taps = 0;
};

inline constexpr double kEvmFloorDb = -300.0;

double kaiser_beta(double atten_db);
/// Odd tap count for the given attenuation and transition width.
int kaiser_taps(double atten_db, double transition_hz, double rate_sps);

/// Linear-phase windowed-sinc low-pass with unity DC gain. Throws
/// Error(Validation) when cutoff + transition exceeds rate / 2.
std::vector<double> design_lowpass(const FilterSpec& spec, double rate_sps);

/// Throws Error(Shift) when |shift_hz| >= rate / 2.
IqBuffer mix_frequency(const IqBuffer& x, double shift_hz);

/// Rational resampler (zero-stuff, filter at rate*up, keep every down-th
/// sample) with group delay removed. up == down == 1 returns the input.
IqBuffer resample_integer(const IqBuffer& x, int up, int down, const FilterSpec& f);

/// Interpolation filter used when a slot signal is lifted to the block rate.
FilterSpec interpolation_filter(const SpectrumSlot& slot, double stopband_atten_db = 60.0);
/// Channel-select filter: passband bw/2, transition one guard band.
FilterSpec default_slot_filter(const SpectrumSlot& slot, double stopband_atten_db = 60.0);

/// Resamples each slot signal to the block rate, shifts it to its offset
/// and sums. The result has at least `min_length` samples.
/// Throws Error(Rate) or Error(Slot).
IqBuffer aggregate(const std::vector<std::pair<IqBuffer, SpectrumSlot>>& slot_signals, const SpectrumBlock& block,
                   std::size_t min_length = 0, double stopband_atten_db = 60.0);

/// Shifts the slot to baseband, filters per `f` and decimates to the slot
/// rate. Throws Error(Rate) unless the block rate is an integer multiple.
IqBuffer disaggregate(const IqBuffer& block_signal, const SpectrumSlot& slot, const FilterSpec& f);

/// 10 log10(sum |ref - test|^2 / sum |ref|^2), floored at kEvmFloorDb.
double evm_dbc(std::span<const Complex> reference, std::span<const Complex> test);
double evm_dbc(const IqBuffer& reference, const IqBuffer& test);

}  // namespace sdrbed
