#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "sdrbed/specvirt.hpp"

namespace sdrbed {

/// Free-space path loss constant for distances in meters and frequencies in Hz.
inline constexpr double kFsplConstantDb = -147.558;
/// At most this many hardware radios can be cabled into the emulator.
inline constexpr std::size_t kMaxPhysicalRadios = 8;

using Position = std::array<double, 3>;

enum class RadioKind { Physical, Virtual };

struct EmulatedRadio {
  std::string id;
  RadioKind kind = RadioKind::Physical;
  Position position_m{0.0, 0.0, 0.0};
};

struct FreeSpace {};
struct LogDistance {
  double exponent = 2.0;
  double d0_m = 1.0;
};

/// Attenuation matrices supplied as data, one per timestamp.
struct Empirical {
  std::vector<std::string> radio_ids;  ///< matrix row/column order
  std::vector<std::pair<double, std::vector<std::vector<double>>>> records;
  std::string source;  ///< file the records were read from, if any
};

using ChannelModel = std::variant<FreeSpace, LogDistance, Empirical>;

struct Keyframe {
  double t_s = 0.0;
  std::map<std::string, Position> positions;
};

struct ChannelScenario {
  std::vector<EmulatedRadio> radios;
  ChannelModel model = FreeSpace{};
  double carrier_hz = 2.4e9;
  std::vector<Keyframe> keyframes;
  /// Receiver noise density; nullopt disables noise.
  std::optional<double> noise_floor_dbm_hz;
};

struct AttenuationMatrix {
  std::vector<std::string> ids;
  std::vector<std::vector<double>> a_db;  ///< a_db[i][j]: loss from radio i to radio j
  double t_s = 0.0;

  std::size_t n() const { return ids.size(); }
  std::size_t index_of(const std::string& id) const;

  bool operator==(const AttenuationMatrix&) const = default;
};

/// Throws Error(Domain) unless d_m > 0 and f_hz > 0.
double path_loss_db(const ChannelModel& model, double d_m, double f_hz);

/// Validates ids, the physical-radio cap, keyframe order and the model.
/// Throws Error(Scenario).
void validate(const ChannelScenario& sc);

/// Position of every radio at `t_s`, interpolated between keyframes.
std::map<std::string, Position> positions_at(const ChannelScenario& sc, double t_s);

AttenuationMatrix attenuation_at(const ChannelScenario& sc, double t_s);

struct TxStream {
  std::string radio_id;
  IqBuffer buffer;
};

/// Sum of attenuated transmissions (excluding rx_id's own) plus complex
/// white Gaussian noise. Amplitude convention: |x|^2 = 1 is 0 dBm.
IqBuffer apply_channel(const std::vector<TxStream>& tx, const AttenuationMatrix& m, const std::string& rx_id,
                       std::optional<double> noise_floor_dbm_hz, std::uint64_t seed);

struct TimelineStep {
  double t_s = 0.0;
  AttenuationMatrix matrix;
  std::map<std::string, IqBuffer> rx;

  bool operator==(const TimelineStep&) const = default;
};

/// Steps at t = 0, step_s, 2 step_s, ... < duration_s. Each step's noise
/// seed is derived from (seed, step index, receiver index).
std::vector<TimelineStep> run_timeline(const ChannelScenario& sc, double duration_s, double step_s,
                                       const std::vector<TxStream>& tx, std::uint64_t seed);

/// Scenario document (see data/scenario_example.json). Empirical models may
/// name a matrix file (resolved relative to `base_dir`) or embed records.
ChannelScenario scenario_from_json(const nlohmann::json& j, const std::string& base_dir = ".");
ChannelScenario load_scenario_file(const std::string& path);
nlohmann::json to_json(const ChannelScenario& sc);
nlohmann::json to_json(const AttenuationMatrix& m);
std::string scenario_hash(const ChannelScenario& sc);

/// Empirical matrix text: optional "# radios: id id ..." line, then for
/// each timestamp a line "@ <t_s>" followed by n rows of n numbers.
Empirical parse_matrix_text(const std::string& text);
Empirical load_matrix_file(const std::string& path);

}  // namespace sdrbed
