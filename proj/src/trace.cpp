#include "empa/trace.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <map>
#include <set>
#include <sstream>

#include "empa/error.hpp"

namespace empa {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<EventKind, std::string_view>, 14> kKindNames{{
    {EventKind::Grant, "grant"},
    {EventKind::StartFragment, "start-fragment"},
    {EventKind::RetirePayload, "retire-payload"},
    {EventKind::RetireMeta, "retire-meta"},
    {EventKind::Block, "block"},
    {EventKind::Unblock, "unblock"},
    {EventKind::Put, "put"},
    {EventKind::Consume, "consume"},
    {EventKind::Signal, "signal"},
    {EventKind::Return, "return"},
    {EventKind::Release, "release"},
    {EventKind::InlineSplice, "inline-splice"},
    {EventKind::InterruptFire, "interrupt-fire"},
    {EventKind::InterruptServe, "interrupt-serve"},
}};

void require_complete(const Trace& trace) {
  if (!trace.complete()) throw Error(Errc::IncompleteTrace, "trace has no result section");
}

}  // namespace

std::string_view to_string(EventKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "?";
}

std::optional<EventKind> parse_event_kind(std::string_view text) {
  for (const auto& [k, name] : kKindNames) {
    if (name == text) return k;
  }
  return std::nullopt;
}

std::optional<std::string> detail_field(std::string_view detail, std::string_view key) {
  std::size_t pos = 0;
  while (pos < detail.size()) {
    std::size_t end = detail.find(' ', pos);
    if (end == std::string_view::npos) end = detail.size();
    const std::string_view token = detail.substr(pos, end - pos);
    if (token.size() > key.size() && token.substr(0, key.size()) == key && token[key.size()] == '=') {
      return std::string(token.substr(key.size() + 1));
    }
    pos = end + 1;
  }
  return std::nullopt;
}

std::optional<std::int64_t> detail_int(std::string_view detail, std::string_view key) {
  const auto text = detail_field(detail, key);
  if (!text) return std::nullopt;
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(text->data(), text->data() + text->size(), value);
  if (ec != std::errc{} || ptr != text->data() + text->size()) return std::nullopt;
  return value;
}

std::string write_trace(const Trace& trace) {
  std::ostringstream os;
  os << "{\n  \"config\": " << trace.config.dump() << ",\n  \"events\": [";
  for (std::size_t i = 0; i < trace.events.size(); ++i) {
    const TraceEvent& e = trace.events[i];
    json j = {{"c", e.cycle},
              {"core", e.core},
              {"kind", std::string(to_string(e.kind))},
              {"frag", e.fragment},
              {"detail", e.detail}};
    os << (i ? ",\n    " : "\n    ") << j.dump();
  }
  os << (trace.events.empty() ? "]" : "\n  ]");
  if (trace.result) {
    json r = {{"cycles", trace.result->cycles}, {"memory", trace.result->memory}};
    os << ",\n  \"result\": " << r.dump();
  }
  os << "\n}\n";
  return os.str();
}

Trace read_trace(std::string_view text) {
  try {
    const json root = json::parse(text.begin(), text.end());
    if (!root.is_object() || !root.contains("events")) throw Error(Errc::Malformed, "trace needs an events array");
    Trace trace;
    if (root.contains("config")) trace.config = root.at("config");
    for (const json& j : root.at("events")) {
      TraceEvent e;
      e.cycle = j.at("c").get<Cycle>();
      e.core = j.at("core").get<CoreId>();
      const auto kind = parse_event_kind(j.at("kind").get<std::string>());
      if (!kind) throw Error(Errc::Malformed, "unknown event kind " + j.at("kind").dump());
      e.kind = *kind;
      e.fragment = j.value("frag", "");
      e.detail = j.value("detail", "");
      trace.events.push_back(std::move(e));
    }
    if (root.contains("result") && !root.at("result").is_null()) {
      const json& r = root.at("result");
      trace.result = TraceResult{r.at("cycles").get<Cycle>(), r.at("memory").get<std::vector<std::int64_t>>()};
    }
    return trace;
  } catch (const json::exception& e) {
    throw Error(Errc::Malformed, e.what());
  }
}

const GraphNode* ProcessingGraph::find(std::int64_t activation) const {
  auto it = std::lower_bound(nodes.begin(), nodes.end(), activation,
                             [](const GraphNode& n, std::int64_t a) { return n.activation < a; });
  return it != nodes.end() && it->activation == activation ? &*it : nullptr;
}

std::string role_label(std::string_view fragment, bool is_root) {
  if (is_root) return "O";
  if (fragment == "hmul") return "H";
  if (fragment == "lload") return "L";
  if (fragment == "fadd") return "+";
  if (fragment == "fsub") return "-";
  return std::string(fragment);
}

ProcessingGraph build_graph(const Trace& trace) {
  require_complete(trace);
  std::map<std::int64_t, GraphNode> nodes;
  std::set<std::int64_t> has_parent;
  ProcessingGraph graph;
  for (const TraceEvent& e : trace.events) {
    const auto act = detail_int(e.detail, "act");
    if (!act) continue;
    switch (e.kind) {
      case EventKind::StartFragment: {
        GraphNode& n = nodes[*act];
        n.activation = *act;
        n.fragment = e.fragment;
        n.core = e.core;
        n.start_cycle = e.cycle;
        n.end_cycle = e.cycle;
        break;
      }
      case EventKind::Grant:
      case EventKind::InlineSplice:
        if (const auto parent = detail_int(e.detail, "parent_act")) {
          graph.edges.push_back({GraphEdge::Kind::Rent, *parent, *act});
          has_parent.insert(*act);
        }
        if (e.kind == EventKind::InlineSplice) nodes[*act].inlined = true;
        break;
      case EventKind::Return:
        if (const auto parent = detail_int(e.detail, "parent_act")) {
          graph.edges.push_back({GraphEdge::Kind::Return, *act, *parent});
        }
        break;
      default: break;
    }
    if (auto it = nodes.find(*act); it != nodes.end()) {
      GraphNode& n = it->second;
      n.end_cycle = std::max(n.end_cycle, e.cycle);
      if (e.kind == EventKind::RetirePayload && !n.first_payload) n.first_payload = e.cycle;
    }
  }
  for (auto& [act, node] : nodes) {
    node.role = role_label(node.fragment, act == 0 && has_parent.count(act) == 0);
    graph.nodes.push_back(node);
  }
  return graph;
}

std::string emit_dot(const ProcessingGraph& graph) {
  std::ostringstream os;
  os << "digraph processing {\n";
  if (!graph.nodes.empty()) {
    os << "  rankdir=TB;\n  node [shape=circle, fontname=\"Helvetica\"];\n";
    std::map<Cycle, std::vector<std::int64_t>> rows;
    for (const GraphNode& n : graph.nodes) {
      const std::string label = n.role + "\\n#" + std::to_string(n.activation) + " c" + std::to_string(n.core);
      os << "  a" << n.activation << " [label=\"" << label << "\"" << (n.inlined ? ", style=dotted" : "")
         << "];\n";
      rows[n.first_payload.value_or(n.start_cycle)].push_back(n.activation);
    }
    for (const auto& [cycle, acts] : rows) {
      os << "  { rank=same; /* cycle " << cycle << " */";
      for (std::int64_t a : acts) os << " a" << a << ";";
      os << " }\n";
    }
    for (const GraphEdge& e : graph.edges) {
      os << "  a" << e.from << " -> a" << e.to << (e.kind == GraphEdge::Kind::Return ? " [style=dashed]" : "")
         << ";\n";
    }
  }
  os << "}\n";
  return os.str();
}

Stats compute_stats(const Trace& trace) {
  require_complete(trace);
  Stats s;
  s.total_cycles = trace.result->cycles;
  s.busy_cores_per_cycle.assign(static_cast<std::size_t>(std::max<Cycle>(s.total_cycles, 0)), 0);

  Cycle horizon = s.total_cycles;
  for (const TraceEvent& e : trace.events) horizon = std::max(horizon, e.cycle);

  std::set<std::pair<Cycle, CoreId>> busy;
  std::set<CoreId> used;
  std::map<CoreId, Cycle> occupied_since;
  std::map<Cycle, int> occupancy_delta;
  std::map<CoreId, Cycle> blocked_since;
  for (const TraceEvent& e : trace.events) {
    switch (e.kind) {
      case EventKind::RetirePayload:
        ++s.payload_retired;
        ++s.payload_per_fragment[e.fragment];
        busy.insert({e.cycle, e.core});
        break;
      case EventKind::RetireMeta:
        ++s.meta_retired;
        busy.insert({e.cycle, e.core});
        break;
      case EventKind::StartFragment:
        used.insert(e.core);
        if (occupied_since.count(e.core) == 0) occupied_since[e.core] = e.cycle;
        break;
      case EventKind::Block:
        if (auto it = blocked_since.find(e.core); it != blocked_since.end()) s.blocked_cycles += e.cycle - it->second;
        blocked_since[e.core] = e.cycle;
        break;
      case EventKind::Unblock:
      case EventKind::Release:
        if (auto it = blocked_since.find(e.core); it != blocked_since.end()) {
          s.blocked_cycles += e.cycle - it->second;
          blocked_since.erase(it);
        }
        if (e.kind == EventKind::Release) {
          if (auto it = occupied_since.find(e.core); it != occupied_since.end()) {
            ++occupancy_delta[it->second];
            --occupancy_delta[e.cycle + 1];
            occupied_since.erase(it);
          }
        }
        break;
      default: break;
    }
  }
  for (const auto& [core, since] : blocked_since) s.blocked_cycles += horizon - since + 1;
  for (const auto& [core, since] : occupied_since) {
    ++occupancy_delta[since];
    --occupancy_delta[horizon + 1];
  }
  int running = 0;
  for (const auto& [cycle, delta] : occupancy_delta) {
    running += delta;
    s.max_cores_used = std::max(s.max_cores_used, static_cast<std::size_t>(std::max(running, 0)));
  }
  s.distinct_cores_used = used.size();

  std::int64_t busy_total = 0;
  for (const auto& [cycle, core] : busy) {
    if (cycle < 1 || cycle > s.total_cycles) continue;
    ++s.busy_cores_per_cycle[static_cast<std::size_t>(cycle - 1)];
    ++busy_total;
  }
  if (s.total_cycles > 0) s.average_busy_cores = Ratio(busy_total, s.total_cycles);
  return s;
}

}  // namespace empa
