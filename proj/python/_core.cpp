#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "zec/bundled.hpp"
#include "zec/capacity.hpp"
#include "zec/cli.hpp"
#include "zec/coupled.hpp"
#include "zec/error.hpp"
#include "zec/fsm.hpp"
#include "zec/spectral.hpp"

namespace py = pybind11;

namespace {

// Accepts a bundled channel name or a channel JSON document.
zec::NoiseFsm load(const std::string& channel) {
  auto first = channel.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && channel[first] == '{') return zec::parse_channel_spec(channel);
  return zec::bundled_channel(channel);
}

std::string analyze(const std::string& channel, std::optional<double> h_lin) {
  return zec::cli::canonical_dump(zec::report_to_json(zec::analyze(load(channel), h_lin)));
}

py::dict zero_test(const std::string& channel) {
  auto fsm = load(channel);
  auto r = zec::zero_capacity_test(zec::coupled_graph(fsm));
  py::dict d;
  d["is_zero"] = r.is_zero;
  d["subsets_explored"] = r.subsets_explored;
  if (r.witness)
    d["witness"] = std::vector<int>(r.witness->begin(), r.witness->end());
  else
    d["witness"] = py::none();
  return d;
}

std::tuple<int, std::string, std::string> run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  int code;
  {
    py::gil_scoped_release release;
    code = zec::cli::run(args, out, err);
  }
  return {code, out.str(), err.str()};
}

std::vector<std::string> bundled_names() {
  std::vector<std::string> names;
  for (const auto& b : zec::bundled_channels()) names.push_back(b.file);
  return names;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Zero-error capacity of finite-state additive noise channels";
  m.attr("__version__") = zec::cli::kToolVersion;

  m.def("bundled_names", &bundled_names);
  m.def("entropy", [](const std::string& channel) { return zec::topological_entropy(load(channel)); },
        py::arg("channel"));
  m.def("analyze", &analyze, py::arg("channel"), py::arg("h_lin") = py::none(),
        "Capacity report as canonical JSON text.");
  m.def("zero_test", &zero_test, py::arg("channel"));
  m.def("run", &run, py::arg("args"), "Runs the CLI in-process; returns (exit_code, stdout, stderr).");

  py::register_exception<zec::Error>(m, "ZecError", PyExc_ValueError);
}
