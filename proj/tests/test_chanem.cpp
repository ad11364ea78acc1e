#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "sdrbed/chanem.hpp"
#include "support.hpp"

using namespace sdrbed;
using testsupport::thrown_kind;

namespace {

// Free-space loss written out from its definition: (4 pi d f / c)^2 in dB.
double fspl_oracle(double d, double f) {
  constexpr double c = 299'792'458.0;
  return 20 * std::log10(4 * std::numbers::pi * d * f / c);
}

IqBuffer tone(double f, double rate, std::size_t n, double amp = 1.0) {
  IqBuffer b{std::vector<Complex>(n), rate, 0.0};
  for (std::size_t i = 0; i < n; ++i) b.samples[i] = std::polar(amp, 2 * std::numbers::pi * f * static_cast<double>(i) / rate);
  return b;
}

double mean_power(const IqBuffer& b) {
  double p = 0;
  for (const auto& v : b.samples) p += std::norm(v);
  return p / static_cast<double>(b.size());
}

ChannelScenario two_radios(double d) {
  ChannelScenario sc;
  sc.radios = {{"a", RadioKind::Physical, {0, 0, 0}}, {"b", RadioKind::Physical, {d, 0, 0}}};
  sc.carrier_hz = 2.4e9;
  return sc;
}

bool bit_identical(const std::vector<TimelineStep>& x, const std::vector<TimelineStep>& y) {
  if (x.size() != y.size()) return false;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (!(x[k].matrix == y[k].matrix) || x[k].rx.size() != y[k].rx.size()) return false;
    for (const auto& [id, buf] : x[k].rx) {
      const auto& other = y[k].rx.at(id).samples;
      if (buf.samples.size() != other.size() ||
          std::memcmp(buf.samples.data(), other.data(), other.size() * sizeof(Complex)) != 0)
        return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("free space path loss") {
  const double l = path_loss_db(FreeSpace{}, 100, 2.4e9);
  CHECK(std::abs(l - 80.05) <= 0.01);
  CHECK(std::abs(l - fspl_oracle(100, 2.4e9)) < 0.01);
  CHECK(l == doctest::Approx(40 + 20 * std::log10(2.4e9) - 147.558));
  for (double d : {1.0, 3.7, 100.0, 1234.5}) {
    CHECK(std::abs(path_loss_db(FreeSpace{}, 2 * d, 2.4e9) - path_loss_db(FreeSpace{}, d, 2.4e9) - 6.02) <= 0.001);
    CHECK(path_loss_db(FreeSpace{}, 10 * d, 900e6) - path_loss_db(FreeSpace{}, d, 900e6) == doctest::Approx(20.0));
  }
  CHECK(thrown_kind([] { path_loss_db(FreeSpace{}, 0, 1e9); }) == "DomainError");
  CHECK(thrown_kind([] { path_loss_db(FreeSpace{}, 1, -1); }) == "DomainError");
  CHECK(thrown_kind([] { path_loss_db(Empirical{}, 1, 1e9); }) == "DomainError");
}

TEST_CASE("log distance model") {
  CHECK(path_loss_db(LogDistance{2.0, 1.0}, 250, 2.4e9) == doctest::Approx(path_loss_db(FreeSpace{}, 250, 2.4e9)));
  const double base = path_loss_db(FreeSpace{}, 10, 2.4e9);
  CHECK(path_loss_db(LogDistance{3.5, 10}, 10, 2.4e9) == doctest::Approx(base));
  CHECK(path_loss_db(LogDistance{3.5, 10}, 100, 2.4e9) == doctest::Approx(base + 35));
}

TEST_CASE("static two radio matrix") {
  auto sc = two_radios(100);
  sc.radios.push_back({"c", RadioKind::Virtual, {0, 30, 40}});
  const auto m = attenuation_at(sc, 0);
  REQUIRE(m.n() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(m.a_db[i][i] == 0);
    for (std::size_t j = 0; j < 3; ++j) CHECK(m.a_db[i][j] == m.a_db[j][i]);
  }
  CHECK(m.a_db[0][1] == doctest::Approx(path_loss_db(FreeSpace{}, 100, 2.4e9)));
  CHECK(m.a_db[0][2] == doctest::Approx(path_loss_db(FreeSpace{}, 50, 2.4e9)));
  CHECK(m.a_db[1][2] == doctest::Approx(path_loss_db(FreeSpace{}, std::sqrt(100.0 * 100 + 900 + 1600), 2.4e9)));
  auto near = two_radios(0.001);
  near.carrier_hz = 1e6;
  CHECK(attenuation_at(near, 0).a_db[0][1] == 0.0);
  CHECK(thrown_kind([] { attenuation_at(two_radios(0), 0); }) == "ScenarioError");
}

TEST_CASE("keyframe interpolation") {
  auto sc = two_radios(10);
  sc.keyframes = {{10, {{"b", {20, 0, 0}}}}, {20, {{"b", {20, 10, 0}}}}};
  CHECK(positions_at(sc, 0).at("b") == Position{10, 0, 0});
  CHECK(positions_at(sc, 5).at("b") == Position{15, 0, 0});
  CHECK(positions_at(sc, 15).at("b") == Position{20, 5, 0});
  CHECK(positions_at(sc, 99).at("b") == Position{20, 10, 0});
  CHECK(positions_at(sc, 7).at("a") == Position{0, 0, 0});
  sc.keyframes.insert(sc.keyframes.begin(), Keyframe{0, {{"b", {12, 0, 0}}}});
  CHECK(positions_at(sc, 0).at("b") == Position{12, 0, 0});
  CHECK(positions_at(sc, 5).at("b") == Position{16, 0, 0});
}

TEST_CASE("attenuation scales amplitude exactly") {
  AttenuationMatrix m{{"a", "b"}, {{0, 20}, {20, 0}}, 0};
  const auto x = tone(1e3, 1e6, 1000);
  const auto y = apply_channel({{"a", x}}, m, "b", std::nullopt, 0);
  REQUIRE(y.size() == x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(y.samples[i].real() == 0.1 * x.samples[i].real());
    CHECK(y.samples[i].imag() == 0.1 * x.samples[i].imag());
  }
  CHECK(10 * std::log10(mean_power(y) / mean_power(x)) == doctest::Approx(-20));
  const auto self = apply_channel({{"a", x}}, m, "a", std::nullopt, 0);
  for (const auto& v : self.samples) CHECK(v == Complex(0, 0));
  CHECK(thrown_kind([&] { apply_channel({{"a", x}}, m, "z", std::nullopt, 0); }) == "ScenarioError");
  CHECK(thrown_kind([&] { apply_channel({{"a", x}, {"b", tone(0, 2e6, 1000)}}, m, "a", std::nullopt, 0); }) ==
        "RateError");
  CHECK(thrown_kind([&] { apply_channel({{"a", x}, {"b", tone(0, 1e6, 999)}}, m, "a", std::nullopt, 0); }) ==
        "RateError");
}

TEST_CASE("noise power follows the floor and bandwidth") {
  AttenuationMatrix m{{"a", "b"}, {{0, 60}, {60, 0}}, 0};
  IqBuffer silent{std::vector<Complex>(200'000), 1e6, 0};
  const auto y = apply_channel({{"a", silent}}, m, "b", -174.0, 7);
  const double want_dbm = -174 + 10 * std::log10(1e6);
  CHECK(10 * std::log10(mean_power(y)) == doctest::Approx(want_dbm).epsilon(0.002));
  double re = 0, im = 0;
  for (const auto& v : y.samples) {
    re += v.real() * v.real();
    im += v.imag() * v.imag();
  }
  CHECK(re / im == doctest::Approx(1.0).epsilon(0.02));
  const auto again = apply_channel({{"a", silent}}, m, "b", -174.0, 7);
  CHECK(again.samples == y.samples);
  const auto other = apply_channel({{"a", silent}}, m, "b", -174.0, 8);
  CHECK(other.samples != y.samples);
}

TEST_CASE("timelines are reproducible per seed") {
  auto sc = two_radios(100);
  sc.noise_floor_dbm_hz = -150;
  sc.keyframes = {{5, {{"b", {300, 0, 0}}}}};
  std::vector<TxStream> tx{{"a", tone(1e4, 1e6, 2048)}, {"b", tone(-2e4, 1e6, 2048)}};
  const auto a = run_timeline(sc, 5, 1, tx, 1234);
  const auto b = run_timeline(sc, 5, 1, tx, 1234);
  const auto c = run_timeline(sc, 5, 1, tx, 1235);
  REQUIRE(a.size() == 5);
  CHECK(bit_identical(a, b));
  CHECK_FALSE(bit_identical(a, c));
  CHECK(a[0].rx.at("a").samples != a[1].rx.at("a").samples);
  CHECK(a[0].rx.at("a").samples != a[0].rx.at("b").samples);
  CHECK(run_timeline(sc, 0, 1, tx, 1).empty());
  CHECK(run_timeline(sc, 1, 0.25, tx, 1).size() == 4);
  CHECK(thrown_kind([&] { run_timeline(sc, 1, 0, tx, 1); }) == "ScenarioError");
}

TEST_CASE("receding radio loses 6.02 dB per distance doubling") {
  auto sc = two_radios(10);
  sc.keyframes = {{70, {{"b", {80, 0, 0}}}}};
  std::vector<TxStream> tx{{"a", tone(1e4, 1e6, 1024)}};
  const auto steps = run_timeline(sc, 71, 10, tx, 0);
  REQUIRE(steps.size() == 8);
  auto rx_db = [&](std::size_t k) { return 10 * std::log10(mean_power(steps[k].rx.at("b"))); };
  // d = 10 + t, so steps 0, 1, 3, 7 sit at 10, 20, 40, 80 m.
  for (auto [near, far] : {std::pair{0, 1}, {1, 3}, {3, 7}}) {
    const double drop = rx_db(static_cast<std::size_t>(near)) - rx_db(static_cast<std::size_t>(far));
    CHECK(std::abs(drop - 6.02) <= 0.001);
    CHECK(drop == doctest::Approx(20 * std::log10(2.0)));
  }
}

TEST_CASE("scenario validation") {
  ChannelScenario many;
  for (int i = 0; i < 9; ++i) many.radios.push_back({"r" + std::to_string(i), RadioKind::Physical, {double(i), 0, 0}});
  CHECK(thrown_kind([&] { validate(many); }) == "ScenarioError");
  many.radios.back().kind = RadioKind::Virtual;
  CHECK_NOTHROW(validate(many));
  auto dup = two_radios(5);
  dup.radios[1].id = "a";
  CHECK(thrown_kind([&] { validate(dup); }) == "ScenarioError");
  auto order = two_radios(5);
  order.keyframes = {{2, {}}, {2, {}}};
  CHECK(thrown_kind([&] { validate(order); }) == "ScenarioError");
  auto unknown = two_radios(5);
  unknown.keyframes = {{1, {{"zz", {0, 0, 0}}}}};
  CHECK(thrown_kind([&] { validate(unknown); }) == "ScenarioError");
  auto carrier = two_radios(5);
  carrier.carrier_hz = 0;
  CHECK(thrown_kind([&] { validate(carrier); }) == "ScenarioError");
}

TEST_CASE("empirical matrices") {
  const auto e = parse_matrix_text("# radios: x y\n@ 0\n0 10\n10 0\n\n@ 5\n0 30\n30 0\n");
  CHECK(e.radio_ids == std::vector<std::string>{"x", "y"});
  REQUIRE(e.records.size() == 2);
  ChannelScenario sc;
  sc.radios = {{"x", RadioKind::Physical, {}}, {"y", RadioKind::Physical, {}}};
  sc.model = e;
  CHECK_NOTHROW(validate(sc));
  CHECK(attenuation_at(sc, 0).a_db[0][1] == 10);
  CHECK(attenuation_at(sc, 4.99).a_db[0][1] == 10);
  CHECK(attenuation_at(sc, 5).a_db[1][0] == 30);
  CHECK(attenuation_at(sc, 500).a_db[1][0] == 30);
  CHECK(thrown_kind([] { parse_matrix_text("0 1\n"); }) == "ParseError");
  CHECK(thrown_kind([] { parse_matrix_text("@ 0\n0 x\n"); }) == "ParseError");
  ChannelScenario neg = sc;
  std::get<Empirical>(neg.model).records[0].second[0][1] = -1;
  CHECK(thrown_kind([&] { validate(neg); }) == "ScenarioError");
  ChannelScenario dim = sc;
  std::get<Empirical>(dim.model).records[1].second.pop_back();
  CHECK(thrown_kind([&] { validate(dim); }) == "ScenarioError");
}

TEST_CASE("scenario documents") {
  const auto sc = load_scenario_file(std::string(SDRBED_DATA_DIR) + "/scenario_example.json");
  CHECK(sc.radios.size() == 4);
  CHECK(sc.noise_floor_dbm_hz == -174.0);
  const auto back = scenario_from_json(to_json(sc));
  CHECK(to_json(back) == to_json(sc));
  CHECK(scenario_hash(back) == scenario_hash(sc));
  auto moved = sc;
  moved.radios[0].position_m[0] += 1;
  CHECK(scenario_hash(moved) != scenario_hash(sc));

  const auto emp = load_scenario_file(std::string(SDRBED_DATA_DIR) + "/scenario_empirical.json");
  const auto m = attenuation_at(emp, 6);
  CHECK(m.a_db[1][2] == 61.8);
  CHECK(attenuation_at(scenario_from_json(to_json(emp)), 6) == m);

  CHECK(thrown_kind([] { scenario_from_json(nlohmann::json::array()); }) == "ParseError");
  CHECK(thrown_kind([] { scenario_from_json({{"radios", 5}}); }) == "ScenarioError");
  CHECK(thrown_kind([] {
          scenario_from_json({{"radios", nlohmann::json::array()}, {"model", {{"kind", "Raytrace"}}}});
        }) == "ScenarioError");
}
