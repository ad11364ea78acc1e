#pragma once

#include <iosfwd>
#include <string>

#include <json.hpp>

#include "sdrbed/allocator.hpp"
#include "sdrbed/specvirt.hpp"

namespace sdrbed {

// IQ file layout (all integers little-endian):
//
//   offset 0   8 bytes   magic "SDRBIQ1\n"
//   offset 8   uint32    header length H
//   offset 12  H bytes   UTF-8 JSON header:
//                          {"rate_sps": <number>, "format": "float64"|"SC16"|"SC8",
//                           "length": <sample count>, "start_phase": <radians>,
//                           "origin": <object>}
//   offset 12+H          `length` complex samples, I then Q per sample:
//                          float64: IEEE-754 binary64, 16 bytes/sample
//                          SC16:    int16, full scale 1.0 -> 32767, 4 bytes/sample
//                          SC8:     int8,  full scale 1.0 -> 127,   2 bytes/sample
//
// Integer formats clip to [-1, 1] and round to nearest. float64 round-trips
// bit-exactly.

struct IqFile {
  IqBuffer buffer;
  SampleFormat format = SampleFormat::Float64;
  nlohmann::json origin = nlohmann::json::object();
};

void write_iq(std::ostream& out, const IqBuffer& buffer, SampleFormat format,
              const nlohmann::json& origin = nlohmann::json::object());
void write_iq_file(const std::string& path, const IqBuffer& buffer, SampleFormat format,
                   const nlohmann::json& origin = nlohmann::json::object());

/// Throws Error(Parse) on a bad magic, header or short payload.
IqFile read_iq(std::istream& in);
IqFile read_iq_file(const std::string& path);

}  // namespace sdrbed
