#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "sdrbed/allocator.hpp"
#include "sdrbed/chanem.hpp"
#include "sdrbed/cli.hpp"
#include "sdrbed/digest.hpp"
#include "sdrbed/error.hpp"
#include "sdrbed/inventory.hpp"
#include "sdrbed/roundtrip.hpp"

namespace py = pybind11;
using namespace sdrbed;
using nlohmann::json;

PYBIND11_MODULE(_sdrbed, m) {
  m.doc() = "Native core of the sdrbed testbed orchestrator. Structured values cross as JSON text.";

  static py::exception<Error> sdrbed_error(m, "SdrbedError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::tuple args = py::make_tuple(std::string(e.name()), std::string(e.what()), e.field());
      PyErr_SetObject(sdrbed_error.ptr(), args.ptr());
    }
  });

  m.def("default_inventory", [] { return to_json(default_inventory()).dump(); });
  m.def("validate_inventory", [](const std::string& doc) { return to_json(load_inventory(doc)).dump(); },
        py::arg("document"));
  m.def("capacity_summary", [](const std::string& doc) { return to_json(capacity_summary(load_inventory(doc))).dump(); },
        py::arg("document"));

  m.def(
      "throughput_check",
      [](double rate_sps, const std::string& format, int streams, double port_rate_bps) {
        SpectrumBlock block;
        block.sample_rate_sps = static_cast<std::int64_t>(rate_sps);
        block.sample_format = sample_format_from_string(format);
        NetworkFabric fabric;
        fabric.port_rate_bps = port_rate_bps;
        const auto r = throughput_check(block, fabric, streams);
        return py::make_tuple(r.fits, r.required_bps);
      },
      py::arg("rate_sps"), py::arg("format") = "SC16", py::arg("streams") = 1, py::arg("port_rate_bps") = 10e9);
  m.def("guard_band_hz", &guard_band_hz, py::arg("bw_hz"));

  m.def(
      "roundtrip_trial",
      [](int n_slots, std::size_t block_samples, std::uint64_t seed) {
        std::vector<RoundTripSlot> slots;
        {
          py::gil_scoped_release release;
          slots = roundtrip_trial(n_slots, block_samples, seed);
        }
        py::list out;
        for (const auto& s : slots) {
          py::dict d;
          d["offset_hz"] = s.slot.offset_hz;
          d["bw_hz"] = s.slot.bw_hz;
          d["slot_rate_sps"] = s.slot.slot_rate_sps;
          d["evm_dbc"] = s.evm_dbc;
          d["leakage_dbc"] = s.leakage_dbc;
          out.append(d);
        }
        return out;
      },
      py::arg("n_slots"), py::arg("block_samples") = std::size_t{1} << 16, py::arg("seed") = 1);

  m.def("fspl_db", [](double d_m, double f_hz) { return path_loss_db(FreeSpace{}, d_m, f_hz); }, py::arg("d_m"),
        py::arg("f_hz"));
  m.def(
      "attenuation_at",
      [](const std::string& scenario, double t_s, const std::string& base_dir) {
        return to_json(attenuation_at(scenario_from_json(json::parse(scenario), base_dir), t_s)).dump();
      },
      py::arg("scenario"), py::arg("t_s"), py::arg("base_dir") = ".");

  m.def("sha256_hex", [](const py::bytes& b) { return sha256_hex(std::string(b)); }, py::arg("data"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"));
}
