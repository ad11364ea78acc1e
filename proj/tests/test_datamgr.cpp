#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "sdrbed/datamgr.hpp"
#include "sdrbed/digest.hpp"
#include "support.hpp"

using namespace sdrbed;
using testsupport::TempDir;
using testsupport::thrown_kind;

namespace {

Reservation active(const std::string& id = "res-000001") {
  Reservation r;
  r.id = id;
  r.user = "u";
  r.window = {0, 3600};
  r.state = ReservationState::Active;
  r.spec.compute.software = {"GNUradio"};
  return r;
}

ConfigSnapshot snap(const Reservation& r) {
  return make_config_snapshot(default_inventory(), r, nullptr, {}, 1'700'000'000);
}

ExperimentRecord rec(double t, std::string node, double f = 2.4e9, double az = 0, double v = -50) {
  ExperimentRecord r;
  r.t_utc = t;
  r.node_id = std::move(node);
  r.label = "room-101";
  r.freq_hz = f;
  r.azimuth_deg = az;
  r.value_dbm = v;
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<ExperimentRecord> scan(const std::vector<ExperimentRecord>& all, const RecordFilter& f) {
  std::vector<ExperimentRecord> out;
  for (const auto& r : all) {
    if (f.t_utc && (r.t_utc < f.t_utc->first || r.t_utc > f.t_utc->second)) continue;
    if (f.node_id && r.node_id != *f.node_id) continue;
    if (f.freq_hz && (r.freq_hz < f.freq_hz->first || r.freq_hz > f.freq_hz->second)) continue;
    if (f.azimuth_deg && (r.azimuth_deg < f.azimuth_deg->first || r.azimuth_deg > f.azimuth_deg->second)) continue;
    out.push_back(r);
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.t_utc != b.t_utc ? a.t_utc < b.t_utc : a.node_id < b.node_id;
  });
  return out;
}

}  // namespace

TEST_CASE("record validation") {
  CHECK_NOTHROW(validate(rec(1, "n")));
  auto noloc = rec(1, "n");
  noloc.label.clear();
  CHECK(thrown_kind([&] { validate(noloc); }) == "ValidationError");
  noloc.xyz_m = Position{1, 2, 3};
  CHECK_NOTHROW(validate(noloc));
  CHECK(thrown_kind([] { validate(rec(1, "n", 2.4e9, 360)); }) == "ValidationError");
  CHECK(thrown_kind([] { validate(rec(1, "n", 2.4e9, -0.1)); }) == "ValidationError");
  CHECK(thrown_kind([] { validate(rec(1, "n", 0)); }) == "ValidationError");
  CHECK(thrown_kind([] { validate(rec(1, "")); }) == "ValidationError");
  CHECK_NOTHROW(validate(rec(1, "n", 1, 359.999)));
}

TEST_CASE("record line codec round trips exactly") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 500; ++i) {
    ExperimentRecord r = rec(1.7e9 + u(rng), "node-" + std::to_string(i % 7), 1e9 + std::abs(u(rng)), 0.0, u(rng));
    if (i % 2) r.xyz_m = Position{u(rng), u(rng), u(rng)};
    if (i % 3 == 0) r.label.clear();
    const auto line = format_record_line(r);
    CHECK(std::count(line.begin(), line.end(), '\t') == 8);
    CHECK(line.back() == '\n');
    CHECK(parse_record_line(line) == r);
  }
  CHECK(thrown_kind([] { parse_record_line("1\tn\t\t\n"); }) == "ParseError");
  auto j = rec(5, "n");
  j.xyz_m = Position{1, 2, 3};
  CHECK(experiment_record_from_json(to_json(j)) == j);
  nlohmann::json doc = {{"t_utc", 3}, {"node_id", "a"}, {"location", "lab"}, {"freq_hz", 1e9},
                        {"azimuth_deg", 10}, {"value_dbm", -3}};
  CHECK(experiment_record_from_json(doc).label == "lab");
}

TEST_CASE("config snapshot") {
  const auto r = active();
  const auto s = snap(r);
  CHECK(s.reservation_id == r.id);
  CHECK(s.inventory_hash == inventory_hash(default_inventory()));
  CHECK(s.scenario_hash.empty());
  CHECK(s.software == std::vector<std::string>{"GNUradio"});
  CHECK(s.sample_formats == std::vector<std::string>{"SC16"});
  CHECK(config_snapshot_from_json(to_json(s)) == s);
}

TEST_CASE("open requires an active reservation") {
  TempDir dir;
  ExperimentStore store(dir.path(), false);
  const auto info = store.open_experiment(active(), snap(active()));
  CHECK(info.record_count == 0);
  CHECK_FALSE(info.sealed);
  CHECK(store.query(info.experiment_id, {}).empty());
  auto done = active();
  done.state = ReservationState::Completed;
  CHECK(thrown_kind([&] { store.open_experiment(done, snap(done)); }) == "StateError");
  CHECK(thrown_kind([&] { store.info("exp-999999"); }) == "NotFound");
}

TEST_CASE("append order is per node") {
  TempDir dir;
  ExperimentStore store(dir.path(), false);
  const auto id = store.open_experiment(active(), snap(active())).experiment_id;
  store.append(id, rec(1, "a"));
  store.append(id, rec(2, "a"));
  store.append(id, rec(2, "a"));
  CHECK(thrown_kind([&] { store.append(id, rec(1.5, "a")); }) == "OrderError");
  store.append(id, rec(0.5, "b"));
  store.append(id, rec(3, "a"));
  store.append(id, rec(0.7, "b"));
  CHECK(store.info(id).record_count == 6);

  // Two-node interleave against a per-node sort oracle.
  std::mt19937_64 rng(4);
  std::map<std::string, double> clock{{"x", 0}, {"y", 1000}};
  std::vector<ExperimentRecord> sent;
  for (int i = 0; i < 200; ++i) {
    const std::string node = i % 3 ? "x" : "y";
    clock[node] += std::uniform_real_distribution<double>(0, 2)(rng);
    sent.push_back(rec(clock[node], node));
    store.append(id, sent.back());
  }
  for (const std::string node : {"x", "y"}) {
    RecordFilter f;
    f.node_id = node;
    const auto got = store.query(id, f);
    std::vector<ExperimentRecord> want;
    for (const auto& r : sent)
      if (r.node_id == node) want.push_back(r);
    std::stable_sort(want.begin(), want.end(), [](auto& a, auto& b) { return a.t_utc < b.t_utc; });
    CHECK(got == want);
  }
}

TEST_CASE("batches are all or nothing") {
  TempDir dir;
  ExperimentStore store(dir.path(), false);
  const auto id = store.open_experiment(active(), snap(active())).experiment_id;
  store.append_batch(id, {rec(1, "a"), rec(2, "a"), rec(1, "b")});
  const auto before = slurp(dir / (id + "/records.log"));
  CHECK(thrown_kind([&] { store.append_batch(id, {rec(3, "a"), rec(2.5, "a")}); }) == "OrderError");
  CHECK(thrown_kind([&] { store.append_batch(id, {rec(3, "a"), rec(4, "a", 2.4e9, 400)}); }) == "ValidationError");
  CHECK(store.info(id).record_count == 3);
  CHECK(slurp(dir / (id + "/records.log")) == before);
}

TEST_CASE("queries match a linear scan") {
  TempDir dir;
  ExperimentStore store(dir.path(), false);
  const auto id = store.open_experiment(active(), snap(active())).experiment_id;
  std::mt19937_64 rng(8);
  std::vector<ExperimentRecord> all;
  std::map<std::string, double> clock;
  const std::vector<double> freqs{900e6, 2.4e9, 3.5e9};
  for (int i = 0; i < 3000; ++i) {
    const std::string node = "n" + std::to_string(std::uniform_int_distribution<int>(0, 5)(rng));
    clock[node] += std::uniform_int_distribution<int>(0, 3)(rng);
    all.push_back(rec(clock[node], node, freqs[static_cast<std::size_t>(i) % 3],
                      std::uniform_int_distribution<int>(0, 359)(rng), -40 - i % 50));
  }
  store.append_batch(id, all);
  CHECK(store.query(id, {}) == scan(all, {}));
  RecordFilter none;
  none.freq_hz = {{5e9, 6e9}};
  CHECK(store.query(id, none).empty());
  for (int q = 0; q < 300; ++q) {
    RecordFilter f;
    if (std::bernoulli_distribution(0.6)(rng)) {
      const double a = std::uniform_int_distribution<int>(0, 1500)(rng);
      f.t_utc = {{a, a + std::uniform_int_distribution<int>(0, 800)(rng)}};
    }
    if (std::bernoulli_distribution(0.5)(rng)) f.node_id = "n" + std::to_string(std::uniform_int_distribution<int>(0, 6)(rng));
    if (std::bernoulli_distribution(0.4)(rng)) f.freq_hz = {{2e9, 4e9}};
    if (std::bernoulli_distribution(0.4)(rng)) {
      const double a = std::uniform_int_distribution<int>(0, 359)(rng);
      f.azimuth_deg = {{a, a + 45}};
    }
    CHECK(store.query(id, f) == scan(all, f));
  }
}

TEST_CASE("seal digest and immutability") {
  TempDir dir;
  ExperimentStore store(dir.path(), false);
  const auto r = active();
  const auto id = store.open_experiment(r, snap(r)).experiment_id;
  store.append_batch(id, {rec(1, "a"), rec(2, "b", 1e9, 90, -60.25)});
  const auto digest = store.seal(id);
  const auto want = sha256_hex(to_json(store.info(id).snapshot).dump() + "\n" + slurp(dir / (id + "/records.log")));
  CHECK(digest == want);
  CHECK(store.info(id).sealed);
  CHECK(store.info(id).digest == digest);
  CHECK(thrown_kind([&] { store.seal(id); }) == "SealedError");
  CHECK(thrown_kind([&] { store.append(id, rec(9, "a")); }) == "SealedError");

  // A copy differing in one record gets a different digest.
  const auto other = store.open_experiment(r, snap(r)).experiment_id;
  store.append_batch(other, {rec(1, "a"), rec(2, "b", 1e9, 90, -60.5)});
  auto s2 = store.info(other).snapshot;
  CHECK(s2 == store.info(id).snapshot);
  CHECK(store.seal(other) != digest);

  const auto same = store.open_experiment(r, snap(r)).experiment_id;
  store.append_batch(same, {rec(1, "a"), rec(2, "b", 1e9, 90, -60.25)});
  CHECK(store.seal(same) == digest);

  Sha256 h;
  h.update("a");
  h.update("bc");
  CHECK(h.hex_digest() == sha256_hex("abc"));
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("reopen recovers archives and drops a torn tail") {
  TempDir dir;
  std::string id, sealed_id, digest;
  {
    ExperimentStore store(dir.path(), false);
    id = store.open_experiment(active(), snap(active())).experiment_id;
    store.append_batch(id, {rec(1, "a"), rec(2, "a")});
    sealed_id = store.open_experiment(active(), snap(active())).experiment_id;
    store.append(sealed_id, rec(1, "z"));
    digest = store.seal(sealed_id);
  }
  {
    std::ofstream out(dir / (id + "/records.log"), std::ios::app | std::ios::binary);
    out << "3	a			";
  }
  {
    ExperimentStore store(dir.path(), false);
    CHECK(store.info(id).record_count == 2);
    CHECK(store.info(sealed_id).sealed);
    CHECK(store.info(sealed_id).digest == digest);
    CHECK(store.list().size() == 2);
    store.append(id, rec(3, "a"));
    CHECK(store.query(id, {}).size() == 3);
    const auto next = store.open_experiment(active(), snap(active())).experiment_id;
    CHECK(next != id);
    CHECK(next != sealed_id);
  }
  {
    ExperimentStore store(dir.path(), false);
    CHECK(store.info(id).record_count == 3);
  }
  {
    std::ofstream out(dir / (id + "/records.log"), std::ios::app | std::ios::binary);
    out << "garbage line\n";
  }
  try {
    ExperimentStore store(dir.path(), false);
    FAIL("expected RecoveryError");
  } catch (const Error& e) {
    CHECK(e.name() == "RecoveryError");
    CHECK(std::string(e.what()).find("offset") != std::string::npos);
  }
}

TEST_CASE("concurrent appends to separate nodes") {
  TempDir dir;
  ExperimentStore store(dir.path(), false);
  const auto id = store.open_experiment(active(), snap(active())).experiment_id;
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < 250; ++i) store.append(id, rec(i, "node-" + std::to_string(t)));
    });
  }
  for (auto& th : threads) th.join();
  CHECK(store.info(id).record_count == 1000);
  ExperimentStore reopened(dir.path(), false);
  CHECK(reopened.query(id, {}) == store.query(id, {}));
}
