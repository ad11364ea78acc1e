#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "sdrbed/iq_file.hpp"
#include "sdrbed/roundtrip.hpp"
#include "sdrbed/specvirt.hpp"
#include "support.hpp"

using namespace sdrbed;
using testsupport::thrown_kind;

namespace {

constexpr double kPi = std::numbers::pi;

IqBuffer tone(double f, double rate, std::size_t n, double amp = 1.0, double phase = 0.0) {
  IqBuffer b{std::vector<Complex>(n), rate, 0.0};
  for (std::size_t i = 0; i < n; ++i) b.samples[i] = std::polar(amp, phase + 2 * kPi * f * static_cast<double>(i) / rate);
  return b;
}

// |H(f)| of a real FIR by direct evaluation of its transfer function.
double response(const std::vector<double>& h, double f, double rate) {
  Complex acc = 0;
  for (std::size_t n = 0; n < h.size(); ++n) acc += h[n] * std::polar(1.0, -2 * kPi * f * static_cast<double>(n) / rate);
  return std::abs(acc);
}

double power(std::span<const Complex> x) {
  double p = 0;
  for (const auto& v : x) p += std::norm(v);
  return p / static_cast<double>(x.size());
}

SpectrumBlock block_with(std::vector<std::pair<double, double>> slots) {
  SpectrumBlock b = make_block("n", 0, 320e6);
  for (auto [off, bw] : slots) b.slots.push_back(plan_spectrum_slots(b, {bw, off, "s" + std::to_string(b.slots.size())}));
  return b;
}

}  // namespace

TEST_CASE("mixing moves a tone by the shift") {
  const double rate = 256.0;
  for (auto [f0, s] : {std::pair{10.0, 20.0}, {-30.0, 50.0}, {40.0, -90.0}, {0.0, 127.0}}) {
    const auto y = mix_frequency(tone(f0, rate, 256), s);
    const double got = testsupport::bin_freq(testsupport::dft_peak_bin(y.samples), 256, rate);
    double want = std::remainder(f0 + s, rate);
    CHECK(got == doctest::Approx(want));
  }
  CHECK(thrown_kind([] { mix_frequency(tone(0, 100, 8), 50); }) == "ShiftError");
  CHECK(thrown_kind([] { mix_frequency(tone(0, 100, 8), -60); }) == "ShiftError");
}

TEST_CASE("consecutive mixes are phase continuous") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const double rate = 1e6;
    const double s = std::uniform_real_distribution<double>(-0.49, 0.49)(rng) * rate;
    const std::size_t n = 1000 + trial * 37;
    const std::size_t cut = std::uniform_int_distribution<std::size_t>(1, n - 1)(rng);
    const auto x = tone(std::uniform_real_distribution<double>(-2e5, 2e5)(rng), rate, n);
    IqBuffer a{{x.samples.begin(), x.samples.begin() + static_cast<std::ptrdiff_t>(cut)}, rate, 0.0};
    IqBuffer b{{x.samples.begin() + static_cast<std::ptrdiff_t>(cut), x.samples.end()}, rate, 0.0};
    const auto ya = mix_frequency(a, s);
    b.start_phase = ya.start_phase;
    const auto yb = mix_frequency(b, s);
    const auto whole = mix_frequency(x, s);
    const double seam = std::abs(std::arg(yb.samples[0] / whole.samples[cut]));
    CHECK(seam < 1e-9);
    double worst = 0;
    for (std::size_t i = 0; i < yb.size(); ++i) worst = std::max(worst, std::abs(yb.samples[i] - whole.samples[cut + i]));
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("mixer stays accurate over long buffers") {
  const std::size_t n = 1 << 20;
  const double rate = 400e6, s = 123.456789e6;
  const auto y = mix_frequency(tone(0, rate, n), s);
  double worst = 0;
  for (std::size_t i = 0; i < n; i += 997) {
    const double exact = std::fmod(2 * kPi * (s / rate) * static_cast<double>(i), 2 * kPi);
    worst = std::max(worst, std::abs(y.samples[i] - std::polar(1.0, exact)));
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("kaiser design meets its mask") {
  CHECK(kaiser_beta(60) == doctest::Approx(0.1102 * (60 - 8.7)));
  CHECK(kaiser_beta(30) == doctest::Approx(0.5842 * std::pow(9.0, 0.4) + 0.07886 * 9));
  CHECK(kaiser_beta(10) == 0.0);
  CHECK(kaiser_taps(60, 1e6, 100e6) % 2 == 1);
  for (double atten : {40.0, 60.0, 80.0}) {
    const double rate = 100e6;
    const FilterSpec spec{10e6, 4e6, atten, 0};
    const auto h = design_lowpass(spec, rate);
    CHECK(h.size() % 2 == 1);
    double sum = 0;
    for (double v : h) sum += v;
    CHECK(sum == doctest::Approx(1.0));
    for (std::size_t i = 0; i < h.size(); ++i) CHECK(h[i] == doctest::Approx(h[h.size() - 1 - i]));
    const double ripple = std::pow(10.0, -atten / 20);
    double worst_pass = 0, worst_stop = 0;
    for (double f = 0; f <= 10e6; f += 50e3) worst_pass = std::max(worst_pass, std::abs(response(h, f, rate) - 1));
    for (double f = 14e6; f <= 50e6; f += 50e3) worst_stop = std::max(worst_stop, response(h, f, rate));
    CHECK(worst_pass <= ripple);
    CHECK(20 * std::log10(worst_stop) <= -atten);
  }
  CHECK(thrown_kind([] { design_lowpass({40e6, 20e6, 60, 0}, 100e6); }) == "ValidationError");
  CHECK(thrown_kind([] { design_lowpass({10e6, 1e6, 60, 4}, 100e6); }) == "ValidationError");
  CHECK(design_lowpass({10e6, 1e6, 60, 31}, 100e6).size() == 31);
}

TEST_CASE("resampling") {
  const auto x = tone(1e3, 16e3, 512);
  const FilterSpec f{3e3, 2e3, 60, 0};
  const auto same = resample_integer(x, 1, 1, f);
  CHECK(same.samples == x.samples);

  const auto up = resample_integer(x, 2, 1, FilterSpec{3e3, 2e3, 60, 0});
  CHECK(up.rate_sps == 32e3);
  CHECK(up.size() == 1024);
  CHECK(testsupport::bin_freq(testsupport::dft_peak_bin(up.samples), 1024, 32e3) == doctest::Approx(1e3));
  // Interior samples match the ideal tone at the doubled rate.
  const auto ideal = tone(1e3, 32e3, 1024);
  const std::size_t skip = 200;
  CHECK(evm_dbc(std::span<const Complex>(ideal.samples).subspan(skip, 1024 - 2 * skip),
                std::span<const Complex>(up.samples).subspan(skip, 1024 - 2 * skip)) < -55);

  // Tones above the new Nyquist are rejected by at least the stopband.
  std::mt19937_64 rng(2);
  const double rate = 1e6;
  const FilterSpec dec{0.2e6, 0.05e6, 60, 0};
  for (int t = 0; t < 10; ++t) {
    const double f0 = std::uniform_real_distribution<double>(0.25e6, 0.5e6)(rng) * (t % 2 ? 1 : -1);
    const auto y = resample_integer(tone(f0, rate, 8192), 1, 2, dec);
    const std::size_t edge = 200;
    const double p = power(std::span<const Complex>(y.samples).subspan(edge, y.size() - 2 * edge));
    CHECK(10 * std::log10(p) <= -60);
  }
  CHECK(thrown_kind([&] { resample_integer(x, 0, 1, f); }) == "ValidationError");
}

TEST_CASE("aggregation places slot tones at their offsets") {
  const auto block = block_with({{-50e6, 20e6}, {50e6, 20e6}});
  const auto& a = block.slots[0];
  const auto& b = block.slots[1];
  CHECK(a.slot_rate_sps == 25'000'000);
  const std::size_t n_slot = 250;
  const auto sa = tone(1e6, 25e6, n_slot);
  const auto sb = tone(-3e6, 25e6, n_slot, 0.5);
  const auto out = aggregate({{sa, a}, {sb, b}}, block);
  CHECK(out.rate_sps == 400e6);
  REQUIRE(out.size() == n_slot * 16);
  const std::size_t n = out.size();
  std::vector<double> mag(n);
  for (std::size_t k = 0; k < n; ++k)
    mag[k] = testsupport::dft_mag(out.samples, out.rate_sps, testsupport::bin_freq(k, n, out.rate_sps));
  std::vector<std::size_t> order(n);
  for (std::size_t k = 0; k < n; ++k) order[k] = k;
  std::partial_sort(order.begin(), order.begin() + 3, order.end(), [&](auto x, auto y) { return mag[x] > mag[y]; });
  CHECK(testsupport::bin_freq(order[0], n, 400e6) == doctest::Approx(-49e6));
  CHECK(testsupport::bin_freq(order[1], n, 400e6) == doctest::Approx(47e6));
  CHECK(mag[order[0]] == doctest::Approx(1.0).epsilon(0.02));
  CHECK(mag[order[1]] == doctest::Approx(0.5).epsilon(0.02));
  CHECK(20 * std::log10(mag[order[2]] / mag[order[1]]) < -30);
}

TEST_CASE("aggregation errors") {
  const auto block = block_with({{-50e6, 20e6}});
  SpectrumSlot stray = block.slots[0];
  stray.offset_hz = 10e6;
  CHECK(thrown_kind([&] { aggregate({{tone(0, 25e6, 16), stray}}, block); }) == "SlotError");
  CHECK(thrown_kind([&] { aggregate({{tone(0, 20e6, 16), block.slots[0]}}, block); }) == "RateError");
  SpectrumBlock clash = make_block("n", 0, 320e6);
  clash.slots = {{0, 20e6, "a", 25'000'000}, {5e6, 20e6, "b", 25'000'000}};
  CHECK(thrown_kind([&] { aggregate({{tone(0, 25e6, 16), clash.slots[0]}, {tone(0, 25e6, 16), clash.slots[1]}}, clash); }) ==
        "SlotError");
  IqBuffer odd{std::vector<Complex>(64), 390e6, 0};
  CHECK(thrown_kind([&] { disaggregate(odd, block.slots[0], default_slot_filter(block.slots[0])); }) == "RateError");
  CHECK(aggregate({}, block, 10).size() == 10);
}

TEST_CASE("single slot round trip") {
  const auto block = block_with({{70e6, 40e6}});
  const auto& slot = block.slots[0];
  const auto k = static_cast<std::size_t>(block.sample_rate_sps / slot.slot_rate_sps);
  const std::size_t n = 4096;
  const auto sent = random_band_limited(0.45 * slot.bw_hz, static_cast<double>(slot.slot_rate_sps), n, 17);
  CHECK(power(sent.samples) == doctest::Approx(1.0));
  const auto comp = aggregate({{sent, slot}}, block);
  CHECK(comp.size() == n * k);
  const auto back = disaggregate(comp, slot, default_slot_filter(slot));
  REQUIRE(back.size() == n);
  const std::size_t skip = 64;
  const double evm = evm_dbc(std::span<const Complex>(sent.samples).subspan(skip, n - 2 * skip),
                             std::span<const Complex>(back.samples).subspan(skip, n - 2 * skip));
  CHECK(evm <= -40);
}

TEST_CASE("cross slot leakage with known tones") {
  const auto block = block_with({{-100e6, 50e6}, {-30e6, 25e6}, {60e6, 10e6}});
  const std::size_t n_block = 1 << 15;
  for (std::size_t victim = 0; victim < 3; ++victim) {
    std::vector<std::pair<IqBuffer, SpectrumSlot>> others;
    double own_rate = static_cast<double>(block.slots[victim].slot_rate_sps);
    for (std::size_t s = 0; s < 3; ++s) {
      if (s == victim) continue;
      const auto& sl = block.slots[s];
      const double r = static_cast<double>(sl.slot_rate_sps);
      // Tones at the passband edges are the worst case for leakage.
      IqBuffer x = tone(0.45 * sl.bw_hz, r, n_block / static_cast<std::size_t>(block.sample_rate_sps / sl.slot_rate_sps));
      const auto y = tone(-0.45 * sl.bw_hz, r, x.size());
      for (std::size_t i = 0; i < x.size(); ++i) x.samples[i] = (x.samples[i] + y.samples[i]) * std::sqrt(0.5);
      others.push_back({x, sl});
    }
    const auto comp = aggregate(others, block, n_block);
    const auto got = disaggregate(comp, block.slots[victim], default_slot_filter(block.slots[victim]));
    const std::size_t skip = got.size() / 8;
    const double leak = power(std::span<const Complex>(got.samples).subspan(skip, got.size() - 2 * skip));
    CHECK(10 * std::log10(leak) <= -50);
    CHECK(got.rate_sps == own_rate);
  }
}

TEST_CASE("zero block yields zero slot") {
  const auto block = block_with({{0, 20e6}});
  IqBuffer zero{std::vector<Complex>(4096), 400e6, 0};
  const auto out = disaggregate(zero, block.slots[0], default_slot_filter(block.slots[0]));
  for (const auto& v : out.samples) CHECK(v == Complex(0, 0));
}

TEST_CASE("evm closed forms") {
  const auto ref = tone(3, 100, 100);
  CHECK(evm_dbc(ref, ref) == kEvmFloorDb);
  IqBuffer scaled = ref;
  for (auto& v : scaled.samples) v *= 0.9;
  CHECK(evm_dbc(ref, scaled) == doctest::Approx(20 * std::log10(0.1)));
  IqBuffer zero{std::vector<Complex>(100), 100, 0};
  CHECK(thrown_kind([&] { evm_dbc(zero, ref); }) == "ZeroReferenceError");
  IqBuffer other_rate = ref;
  other_rate.rate_sps = 50;
  CHECK(thrown_kind([&] { evm_dbc(ref, other_rate); }) == "RateError");
}

TEST_CASE("round trip trial scores every slot") {
  const auto slots = roundtrip_trial(3, 1 << 16, 42);
  REQUIRE(slots.size() == 3);
  for (const auto& s : slots) {
    CHECK(s.evm_dbc <= -40);
    CHECK(s.leakage_dbc <= -50);
  }
  const auto again = roundtrip_trial(3, 1 << 16, 42);
  for (std::size_t i = 0; i < 3; ++i) CHECK(again[i].evm_dbc == slots[i].evm_dbc);
}

TEST_CASE("iq file round trips") {
  auto x = random_band_limited(1e6, 4e6, 1000, 9);
  double peak = 0;
  for (const auto& v : x.samples) peak = std::max({peak, std::abs(v.real()), std::abs(v.imag())});
  for (auto& v : x.samples) v *= 0.99 / peak;
  x.start_phase = 0.25;
  {
    std::stringstream ss;
    write_iq(ss, x, SampleFormat::Float64, {{"slot", "a"}});
    const auto back = read_iq(ss);
    CHECK(back.buffer.samples == x.samples);
    CHECK(back.buffer.rate_sps == x.rate_sps);
    CHECK(back.buffer.start_phase == x.start_phase);
    CHECK(back.origin.at("slot") == "a");
    CHECK(back.format == SampleFormat::Float64);
  }
  for (auto [fmt, full] : {std::pair{SampleFormat::SC16, 32767.0}, {SampleFormat::SC8, 127.0}}) {
    std::stringstream ss;
    write_iq(ss, x, fmt);
    const auto back = read_iq(ss);
    REQUIRE(back.buffer.size() == x.size());
    double worst = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      worst = std::max(worst, std::abs(back.buffer.samples[i].real() - x.samples[i].real()));
      worst = std::max(worst, std::abs(back.buffer.samples[i].imag() - x.samples[i].imag()));
    }
    CHECK(worst <= 0.5 / full + 1e-12);
  }
  IqBuffer loud{{Complex(2.0, -3.0)}, 1.0, 0.0};
  std::stringstream ss;
  write_iq(ss, loud, SampleFormat::SC16);
  CHECK(read_iq(ss).buffer.samples[0] == Complex(1.0, -1.0));

  std::stringstream bad("NOTIQ...");
  CHECK(thrown_kind([&] { read_iq(bad); }) == "ParseError");
  std::stringstream good;
  write_iq(good, x, SampleFormat::SC16);
  std::string text = good.str();
  text.resize(text.size() - 3);
  std::stringstream shortened(text);
  CHECK(thrown_kind([&] { read_iq(shortened); }) == "ParseError");

  testsupport::TempDir dir;
  write_iq_file(dir / "x.iq", x, SampleFormat::Float64);
  CHECK(read_iq_file(dir / "x.iq").buffer.samples == x.samples);
}
