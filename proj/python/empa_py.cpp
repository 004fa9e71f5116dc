#include <sstream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "empa/amdahl.hpp"
#include "empa/assembler.hpp"
#include "empa/cli.hpp"
#include "empa/engine.hpp"
#include "empa/error.hpp"
#include "empa/kernels.hpp"

namespace py = pybind11;
using namespace empa;

namespace {

Model model_of(const std::string& text) {
  auto m = parse_model(text);
  if (!m) throw py::value_error("model must be 'empa' or 'spa'");
  return *m;
}

std::string assemble_text(const std::string& text, const std::string& mode, const std::string& origin) {
  const SourceUnit source{text, origin};
  const AssembleResult r = assemble(source, model_of(mode) == Model::Spa ? AsmMode::Spa : AsmMode::Empa);
  if (!r.ok()) {
    std::string all;
    for (const auto& d : r.diagnostics) all += format_diagnostic(source, d) + "\n";
    throw py::value_error(all);
  }
  return encode(*r.object);
}

py::dict stats_dict(const Stats& s) {
  py::dict d;
  d["total_cycles"] = s.total_cycles;
  d["payload_retired"] = s.payload_retired;
  d["meta_retired"] = s.meta_retired;
  d["busy_cores_per_cycle"] = s.busy_cores_per_cycle;
  d["average_busy_cores"] = py::make_tuple(s.average_busy_cores.numerator(), s.average_busy_cores.denominator());
  d["max_cores_used"] = s.max_cores_used;
  d["distinct_cores_used"] = s.distinct_cores_used;
  d["blocked_cycles"] = s.blocked_cycles;
  d["payload_per_fragment"] = s.payload_per_fragment;
  return d;
}

py::dict run_object(const std::string& object, std::optional<std::size_t> cores, const std::string& model,
                    std::size_t reserved, Cycle penalty, std::optional<std::pair<Cycle, std::string>> irq) {
  MachineConfig config;
  config.pool_size = cores;
  config.model = model_of(model);
  config.reserved_interrupt_cores = reserved;
  config.spa_context_switch_penalty = penalty;
  if (irq) {
    config.interrupt = InterruptPlan{irq->first, irq->second};
    if (config.model == Model::Empa && reserved == 0) config.reserved_interrupt_cores = 1;
  }
  RunResult r;
  {
    py::gil_scoped_release release;
    r = run(decode(object), config);
  }
  py::dict d;
  d["cycles"] = r.cycles;
  d["memory"] = r.memory;
  d["halted_cleanly"] = r.halted_cleanly;
  d["deadlock"] = r.deadlock;
  d["interrupt_latency"] = r.interrupt_latency;
  d["interrupt_service"] = r.interrupt_service;
  d["stats"] = stats_dict(r.stats);
  d["trace"] = write_trace(*r.trace);
  d["dot"] = emit_dot(build_graph(*r.trace));
  return d;
}

}  // namespace

PYBIND11_MODULE(_empa, m) {
  m.doc() = "EMPA-8 many-processor simulator";

  static py::exception<Error> empa_error(m, "EmpaError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(empa_error, e.what());
    }
  });

  m.def("assemble", &assemble_text, py::arg("source"), py::arg("mode") = "empa", py::arg("origin") = "<memory>",
        "Assemble .emps text; returns the .empo object text.");
  m.def("disassemble", [](const std::string& object) { return disassemble(decode(object)).text; }, py::arg("object"));
  m.def("kernels", &kernel_names);
  m.def(
      "generate",
      [](const std::string& kernel, const std::map<std::string, std::int64_t>& params, const std::string& variant) {
        return generate({kernel, params, model_of(variant)}).text;
      },
      py::arg("kernel"), py::arg("params") = std::map<std::string, std::int64_t>{}, py::arg("variant") = "empa");
  m.def("run", &run_object, py::arg("object"), py::arg("cores") = std::nullopt, py::arg("model") = "empa",
        py::arg("reserved") = 0, py::arg("penalty") = 2000, py::arg("irq") = std::nullopt,
        "Simulate an .empo object; cores=None is an unlimited pool.");
  m.def(
      "bench",
      [](const std::string& kernel, const std::map<std::string, std::int64_t>& params, std::optional<std::size_t> cores) {
        MachineConfig spa_cfg;
        spa_cfg.model = Model::Spa;
        spa_cfg.trace_enabled = false;
        MachineConfig empa_cfg;
        empa_cfg.pool_size = cores;
        empa_cfg.trace_enabled = false;
        const RunResult spa = run(build_kernel({kernel, params, Model::Spa}), spa_cfg);
        const RunResult par = run(build_kernel({kernel, params, Model::Empa}), empa_cfg);
        const Ratio s = speedup(spa, par);
        py::dict d;
        d["spa"] = spa.cycles;
        d["empa"] = par.cycles;
        d["speedup"] = py::make_tuple(s.numerator(), s.denominator());
        return d;
      },
      py::arg("kernel"), py::arg("params") = std::map<std::string, std::int64_t>{}, py::arg("cores") = std::nullopt);

  m.def("efficiency", py::overload_cast<double, double>(&amdahl::efficiency), py::arg("alpha"), py::arg("k"));
  m.def("imperfectness", py::overload_cast<double, double>(&amdahl::imperfectness), py::arg("efficiency"),
        py::arg("k"));
  m.def(
      "record_beta",
      [](std::int64_t cores, const std::string& rmax, const std::string& rpeak) {
        auto a = amdahl::parse_decimal(rmax);
        auto b = amdahl::parse_decimal(rpeak);
        if (!a || !b) throw py::value_error("rmax and rpeak must be decimal numbers");
        return amdahl::to_double(amdahl::from_record({0, 0, "", cores, *a, *b}).beta);
      },
      py::arg("cores"), py::arg("rmax"), py::arg("rpeak"), "Imperfectness of one record; decimals are parsed exactly.");
  m.def(
      "fit_trend",
      [](const std::vector<std::pair<int, std::string>>& points) {
        std::vector<std::pair<int, amdahl::Exact>> exact;
        for (const auto& [year, beta] : points) {
          auto b = amdahl::parse_decimal(beta);
          if (!b) throw py::value_error("beta must be a decimal number");
          exact.emplace_back(year, *b);
        }
        const amdahl::TrendFit fit = amdahl::fit_trend(exact);
        py::dict d;
        d["slope"] = fit.slope.str();
        d["intercept"] = fit.intercept.str();
        d["residual"] = fit.residual.str();
        return d;
      },
      py::arg("points"), "Least squares on (year, log10 beta); results are exact rationals as text.");

  m.def(
      "cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = dispatch(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run the command-line front end; returns (exit code, stdout, stderr).");
}
