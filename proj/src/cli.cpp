#include "empa/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "empa/amdahl.hpp"
#include "empa/assembler.hpp"
#include "empa/engine.hpp"
#include "empa/error.hpp"
#include "empa/kernels.hpp"
#include "empa/trace.hpp"

namespace empa {

namespace {

using nlohmann::json;

std::string read_file(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw Error(Errc::Io, "cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << file.rdbuf();
  return buffer.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream file(path, std::ios::binary);
  if (!file || !(file << text)) throw Error(Errc::Io, "cannot write '" + path + "'");
}

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string ratio_text(const Ratio& r) {
  return std::to_string(r.numerator()) + (r.denominator() == 1 ? "" : "/" + std::to_string(r.denominator()));
}

// Assembly failures are reported as diagnostics and mapped to a user error.
struct AsmFailed {};

ObjectCode load_object(const std::string& path, Model model, std::ostream& err) {
  const std::string text = read_file(path);
  if (!ends_with(path, ".emps")) return decode(text);
  const SourceUnit source{text, path};
  AssembleResult assembled = assemble(source, model == Model::Spa ? AsmMode::Spa : AsmMode::Empa);
  for (const AsmDiagnostic& d : assembled.diagnostics) err << format_diagnostic(source, d) << "\n";
  if (!assembled.ok()) throw AsmFailed{};
  return std::move(*assembled.object);
}

std::optional<std::size_t> parse_cores(const std::string& text) {
  if (text == "unlimited") return std::nullopt;
  std::size_t used = 0;
  long long value = 0;
  try {
    value = std::stoll(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || value < 1) throw Error(Errc::InvalidConfig, "--cores expects N >= 1 or 'unlimited'");
  return static_cast<std::size_t>(value);
}

json stats_json(const Stats& s) {
  json per_fragment = json::object();
  for (const auto& [name, count] : s.payload_per_fragment) per_fragment[name] = count;
  return {{"total_cycles", s.total_cycles},
          {"payload_retired", s.payload_retired},
          {"meta_retired", s.meta_retired},
          {"busy_cores_per_cycle", s.busy_cores_per_cycle},
          {"average_busy_cores", ratio_text(s.average_busy_cores)},
          {"max_cores_used", s.max_cores_used},
          {"distinct_cores_used", s.distinct_cores_used},
          {"blocked_cycles", s.blocked_cycles},
          {"payload_per_fragment", per_fragment}};
}

void print_stats(std::ostream& out, const Stats& s) {
  out << "payload-retired=" << s.payload_retired << "\n"
      << "meta-retired=" << s.meta_retired << "\n"
      << "average-busy-cores=" << ratio_text(s.average_busy_cores) << " (" << fixed2(to_double(s.average_busy_cores))
      << ")\n"
      << "max-cores-used=" << s.max_cores_used << "\n"
      << "distinct-cores-used=" << s.distinct_cores_used << "\n"
      << "blocked-cycles=" << s.blocked_cycles << "\n";
  for (const auto& [name, count] : s.payload_per_fragment) out << "payload[" << name << "]=" << count << "\n";
}

struct RunOptions {
  std::string input;
  std::string cores = "unlimited";
  std::string model = "empa";
  std::string trace_path;
  std::string dot_path;
  std::string irq;
  Cycle penalty = 2000;
  std::optional<std::size_t> reserved;
  bool json = false;
};

int cmd_run(const RunOptions& o, std::ostream& out, std::ostream& err) {
  MachineConfig config;
  config.model = *parse_model(o.model);
  config.pool_size = parse_cores(o.cores);
  config.spa_context_switch_penalty = o.penalty;
  config.reserved_interrupt_cores = o.reserved.value_or(0);
  if (!o.irq.empty()) {
    const auto colon = o.irq.find(':');
    InterruptPlan plan;
    try {
      if (colon == std::string::npos) throw std::invalid_argument("colon");
      plan.fire_cycle = std::stoll(o.irq.substr(0, colon));
    } catch (const std::exception&) {
      throw Error(Errc::InvalidConfig, "--irq expects CYCLE:FRAGMENT");
    }
    plan.isr_fragment = o.irq.substr(colon + 1);
    config.interrupt = plan;
    if (config.model == Model::Empa && !o.reserved) config.reserved_interrupt_cores = 1;
  }
  const ObjectCode object = load_object(o.input, config.model, err);
  const RunResult r = run(object, config);
  if (!o.trace_path.empty()) write_file(o.trace_path, write_trace(*r.trace));
  if (!o.dot_path.empty()) write_file(o.dot_path, emit_dot(build_graph(*r.trace)));
  if (o.json) {
    json j = {{"cycles", r.cycles},
              {"halted_cleanly", r.halted_cleanly},
              {"deadlock", r.deadlock ? json(*r.deadlock) : json(nullptr)},
              {"stats", stats_json(r.stats)},
              {"memory", r.memory}};
    j["interrupt_latency"] = r.interrupt_latency ? json(*r.interrupt_latency) : json(nullptr);
    j["interrupt_service"] = r.interrupt_service ? json(*r.interrupt_service) : json(nullptr);
    out << j.dump() << "\n";
  } else {
    out << "cycles=" << r.cycles << "\n" << "halted=" << (r.halted_cleanly ? "yes" : "no") << "\n";
    print_stats(out, r.stats);
    if (r.interrupt_latency) {
      out << "interrupt-latency=" << *r.interrupt_latency << "\n"
          << "interrupt-service=" << *r.interrupt_service << "\n";
    }
  }
  if (r.deadlock) {
    err << *r.deadlock << "\n";
    return kExitFault;
  }
  return kExitOk;
}

struct KernelOptions {
  std::string kernel;
  std::optional<std::int64_t> n;
  std::optional<std::int64_t> width;
  std::optional<std::int64_t> height;
  std::optional<std::int64_t> fanout;
};

KernelSpec kernel_spec(const KernelOptions& o, Model variant) {
  KernelSpec spec{o.kernel, {}, variant};
  if (o.n) {
    if (o.kernel == "conv2d") {
      spec.params["width"] = *o.n;
      spec.params["height"] = *o.n;
    } else {
      spec.params["n"] = *o.n;
    }
  }
  if (o.width) spec.params["width"] = *o.width;
  if (o.height) spec.params["height"] = *o.height;
  if (o.fanout) spec.params["fanout"] = *o.fanout;
  return spec;
}

int cmd_bench(const KernelOptions& k, const std::string& cores, bool as_json, std::ostream& out, std::ostream& err) {
  MachineConfig spa_config;
  spa_config.model = Model::Spa;
  spa_config.trace_enabled = false;
  MachineConfig empa_config;
  empa_config.pool_size = parse_cores(cores);
  empa_config.trace_enabled = false;
  const RunResult spa = run(build_kernel(kernel_spec(k, Model::Spa)), spa_config);
  const RunResult empa = run(build_kernel(kernel_spec(k, Model::Empa)), empa_config);
  if (empa.deadlock) {
    err << *empa.deadlock << "\n";
    return kExitFault;
  }
  const Ratio gain = speedup(spa, empa);
  if (as_json) {
    out << json{{"kernel", k.kernel},
                {"spa_cycles", spa.cycles},
                {"empa_cycles", empa.cycles},
                {"speedup", ratio_text(gain)},
                {"speedup_value", to_double(gain)},
                {"empa_max_cores_used", empa.stats.max_cores_used},
                {"spa_payload_retired", spa.stats.payload_retired},
                {"empa_payload_retired", empa.stats.payload_retired}}
               .dump()
        << "\n";
  } else {
    out << "spa=" << spa.cycles << " empa=" << empa.cycles << " speedup=" << fixed2(to_double(gain)) << "\n";
  }
  return kExitOk;
}

int cmd_amdahl(const std::string& csv, bool fit, const std::string& out_path, bool as_json, std::ostream& out) {
  using namespace amdahl;
  const std::vector<MachineRecord> records = load_csv(csv);
  std::vector<std::pair<int, Exact>> points;
  json rows = json::array();
  for (const MachineRecord& r : records) {
    const AmdahlPoint p = from_record(r);
    points.emplace_back(r.year, p.beta);
    if (as_json) {
      rows.push_back({{"year", r.year},
                      {"rank", r.rank},
                      {"name", r.name},
                      {"cores", r.cores},
                      {"efficiency", amdahl::to_double(p.efficiency)},
                      {"beta", amdahl::to_double(p.beta)}});
    } else {
      out << r.year << " " << r.name << " cores=" << r.cores << " E=" << format_sci(p.efficiency)
          << " beta=" << format_sci(p.beta) << "\n";
    }
  }
  std::optional<TrendFit> trend;
  if (fit) trend = fit_trend(points);
  if (trend) {
    if (as_json) {
      out << json{{"rows", rows},
                  {"fit",
                   {{"slope", amdahl::to_double(trend->slope)},
                    {"intercept", amdahl::to_double(trend->intercept)},
                    {"residual", amdahl::to_double(trend->residual)}}}}
                 .dump()
          << "\n";
    } else {
      out << "slope=" << format_sci(trend->slope) << " decades/year intercept=" << format_sci(trend->intercept)
          << " residual=" << format_sci(trend->residual) << "\n";
    }
  } else if (as_json) {
    out << json{{"rows", rows}}.dump() << "\n";
  }
  if (!out_path.empty()) write_file(out_path, beta_csv(records, trend));
  return kExitOk;
}

int exit_code(const Error& e) {
  switch (e.code()) {
    case Errc::RuntimeFault:
    case Errc::LinkBusy:
    case Errc::FaultOrphan: return kExitFault;
    default: return kExitUser;
  }
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"EMPA-8 many-processor simulator", "empa"};
  app.require_subcommand(1);
  std::function<int()> action;

  auto* asm_cmd = app.add_subcommand("asm", "assemble .emps source into a .empo object");
  std::string asm_in, asm_out, asm_mode = "empa";
  asm_cmd->add_option("input", asm_in, "source file")->required();
  asm_cmd->add_option("-o,--output", asm_out, "object file")->required();
  asm_cmd->add_option("--mode", asm_mode, "empa or spa")->check(CLI::IsMember({"empa", "spa"}));
  asm_cmd->callback([&] {
    action = [&] {
      const SourceUnit source{read_file(asm_in), asm_in};
      const AssembleResult r = assemble(source, asm_mode == "spa" ? AsmMode::Spa : AsmMode::Empa);
      for (const AsmDiagnostic& d : r.diagnostics) err << format_diagnostic(source, d) << "\n";
      if (!r.ok()) return kExitUser;
      write_file(asm_out, encode(*r.object));
      return kExitOk;
    };
  });

  auto* dis_cmd = app.add_subcommand("dis", "print canonical source for a .empo object");
  std::string dis_in;
  dis_cmd->add_option("input", dis_in, "object file")->required();
  dis_cmd->callback([&] {
    action = [&] {
      out << disassemble(decode(read_file(dis_in))).text;
      return kExitOk;
    };
  });

  auto* run_cmd = app.add_subcommand("run", "simulate an object (or .emps source)");
  RunOptions run_opts;
  run_cmd->add_option("input", run_opts.input, "object or source file")->required();
  run_cmd->add_option("--cores", run_opts.cores, "pool size including the root, or 'unlimited'");
  run_cmd->add_option("--model", run_opts.model, "empa or spa")->check(CLI::IsMember({"empa", "spa"}));
  run_cmd->add_option("--trace", run_opts.trace_path, "write the event trace (.emtr)");
  run_cmd->add_option("--dot", run_opts.dot_path, "write the processing graph (.dot)");
  run_cmd->add_option("--irq", run_opts.irq, "fire an interrupt: CYCLE:FRAGMENT");
  run_cmd->add_option("--penalty", run_opts.penalty, "spa context-switch penalty in cycles")
      ->check(CLI::NonNegativeNumber);
  run_cmd->add_option("--reserved", run_opts.reserved, "reserved interrupt cores (default 1 with --irq)");
  run_cmd->add_flag("--json", run_opts.json, "machine-readable output");
  run_cmd->callback([&] { action = [&] { return cmd_run(run_opts, out, err); }; });

  auto* graph_cmd = app.add_subcommand("graph", "processing graph of a trace as DOT");
  std::string graph_in, graph_out;
  graph_cmd->add_option("trace", graph_in, "trace file")->required();
  graph_cmd->add_option("-o,--output", graph_out, "DOT file")->required();
  graph_cmd->callback([&] {
    action = [&] {
      write_file(graph_out, emit_dot(build_graph(read_trace(read_file(graph_in)))));
      return kExitOk;
    };
  });

  auto* stats_cmd = app.add_subcommand("stats", "statistics of a trace");
  std::string stats_in;
  bool stats_json_flag = false;
  stats_cmd->add_option("trace", stats_in, "trace file")->required();
  stats_cmd->add_flag("--json", stats_json_flag, "machine-readable output");
  stats_cmd->callback([&] {
    action = [&] {
      const Trace trace = read_trace(read_file(stats_in));
      const Stats s = compute_stats(trace);
      if (stats_json_flag) {
        out << stats_json(s).dump() << "\n";
      } else {
        out << "cycles=" << s.total_cycles << "\n";
        print_stats(out, s);
      }
      return kExitOk;
    };
  });

  KernelOptions kopts;
  auto add_kernel_options = [&](CLI::App* cmd) {
    cmd->add_option("--kernel", kopts.kernel, "expr2, vecsum, vecsum_tree, conv2d or irq_demo")->required();
    cmd->add_option("--n", kopts.n, "problem size (image side for conv2d)");
    cmd->add_option("--width", kopts.width, "conv2d image width");
    cmd->add_option("--height", kopts.height, "conv2d image height");
    cmd->add_option("--fanout", kopts.fanout, "vecsum_tree fan-out");
  };

  auto* gen_cmd = app.add_subcommand("gen", "generate a benchmark kernel as .emps source");
  add_kernel_options(gen_cmd);
  std::string gen_variant = "empa", gen_out;
  gen_cmd->add_option("--variant", gen_variant, "empa or spa")->check(CLI::IsMember({"empa", "spa"}));
  gen_cmd->add_option("-o,--output", gen_out, "source file (default: standard output)");
  gen_cmd->callback([&] {
    action = [&] {
      const SourceUnit source = generate(kernel_spec(kopts, *parse_model(gen_variant)));
      if (gen_out.empty()) {
        out << source.text;
      } else {
        write_file(gen_out, source.text);
      }
      return kExitOk;
    };
  });

  auto* bench_cmd = app.add_subcommand("bench", "run both variants of a kernel and report the speedup");
  add_kernel_options(bench_cmd);
  std::string bench_cores = "unlimited";
  bool bench_json = false;
  bench_cmd->add_option("--cores", bench_cores, "empa pool size including the root, or 'unlimited'");
  bench_cmd->add_flag("--json", bench_json, "machine-readable output");
  bench_cmd->callback([&] { action = [&] { return cmd_bench(kopts, bench_cores, bench_json, out, err); }; });

  auto* amdahl_cmd = app.add_subcommand("amdahl", "imperfectness of supercomputer records");
  std::string amdahl_csv, amdahl_out;
  bool amdahl_fit = false, amdahl_json = false;
  amdahl_cmd->add_option("--csv", amdahl_csv, "records: " + std::string(amdahl::kCsvHeader))->required();
  amdahl_cmd->add_flag("--fit", amdahl_fit, "fit a log-linear trend of beta over the years");
  amdahl_cmd->add_option("--out", amdahl_out, "write year,beta,fit_beta CSV");
  amdahl_cmd->add_flag("--json", amdahl_json, "machine-readable output");
  amdahl_cmd->callback([&] {
    action = [&] { return cmd_amdahl(amdahl_csv, amdahl_fit, amdahl_out, amdahl_json, out); };
  });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUser;
  }
  if (!action) return kExitUser;
  try {
    return action();
  } catch (const AsmFailed&) {
    return kExitUser;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e);
  }
}

}  // namespace empa
