#include "sdrbed/iq_file.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "sdrbed/error.hpp"

namespace sdrbed {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'S', 'D', 'R', 'B', 'I', 'Q', '1', '\n'};

void put_le(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_le(const unsigned char* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

std::int64_t quantize(double v, double full_scale) {
  return static_cast<std::int64_t>(std::lround(std::clamp(v, -1.0, 1.0) * full_scale));
}

}  // namespace

void write_iq(std::ostream& out, const IqBuffer& buffer, SampleFormat format, const json& origin) {
  const json header = {{"rate_sps", buffer.rate_sps},
                       {"format", std::string(to_string(format))},
                       {"length", buffer.samples.size()},
                       {"start_phase", buffer.start_phase},
                       {"origin", origin}};
  const std::string text = header.dump();
  std::string bytes(kMagic, sizeof kMagic);
  put_le(bytes, text.size(), 4);
  bytes += text;
  bytes.reserve(bytes.size() + buffer.samples.size() * static_cast<std::size_t>(bytes_per_complex(format)));
  for (const auto& s : buffer.samples) {
    for (double v : {s.real(), s.imag()}) {
      switch (format) {
        case SampleFormat::Float64: put_le(bytes, std::bit_cast<std::uint64_t>(v), 8); break;
        case SampleFormat::SC16: put_le(bytes, static_cast<std::uint16_t>(quantize(v, 32767.0)), 2); break;
        case SampleFormat::SC8: put_le(bytes, static_cast<std::uint8_t>(quantize(v, 127.0)), 1); break;
      }
    }
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::Validation, "failed to write IQ stream");
}

void write_iq_file(const std::string& path, const IqBuffer& buffer, SampleFormat format, const json& origin) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Validation, "cannot create " + path);
  write_iq(out, buffer, format, origin);
}

IqFile read_iq(std::istream& in) {
  char magic[8];
  unsigned char len_bytes[4];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw Error(ErrorKind::Parse, "not an IQ file");
  if (!in.read(reinterpret_cast<char*>(len_bytes), 4)) throw Error(ErrorKind::Parse, "truncated IQ header");
  const auto header_len = static_cast<std::size_t>(get_le(len_bytes, 4));
  std::string text(header_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_len))) throw Error(ErrorKind::Parse, "truncated IQ header");
  IqFile file;
  std::size_t length = 0;
  try {
    const json header = json::parse(text);
    file.buffer.rate_sps = header.at("rate_sps").get<double>();
    file.format = sample_format_from_string(header.at("format").get<std::string>());
    length = header.at("length").get<std::size_t>();
    file.buffer.start_phase = header.value("start_phase", 0.0);
    file.origin = header.value("origin", json::object());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("bad IQ header: ") + e.what());
  }
  const int component = bytes_per_complex(file.format) / 2;
  std::vector<unsigned char> payload(length * static_cast<std::size_t>(component) * 2);
  if (!in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size())))
    throw Error(ErrorKind::Parse, "IQ payload shorter than the declared length");
  file.buffer.samples.resize(length);
  const unsigned char* p = payload.data();
  auto next = [&]() -> double {
    double v = 0.0;
    switch (file.format) {
      case SampleFormat::Float64: v = std::bit_cast<double>(get_le(p, 8)); break;
      case SampleFormat::SC16: v = static_cast<std::int16_t>(get_le(p, 2)) / 32767.0; break;
      case SampleFormat::SC8: v = static_cast<std::int8_t>(get_le(p, 1)) / 127.0; break;
    }
    p += component;
    return v;
  };
  for (auto& s : file.buffer.samples) {
    const double re = next();
    const double im = next();
    s = {re, im};
  }
  return file;
}

IqFile read_iq_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Parse, "cannot open " + path);
  return read_iq(in);
}

}  // namespace sdrbed
