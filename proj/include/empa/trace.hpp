#pragma once

// Recorded runs: event log, processing graph, DOT emission and statistics.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <boost/rational.hpp>
#include <json.hpp>

#include "empa/event.hpp"

namespace empa {

using Ratio = boost::rational<std::int64_t>;

inline double to_double(const Ratio& r) {
  return static_cast<double>(r.numerator()) / static_cast<double>(r.denominator());
}

struct TraceResult {
  Cycle cycles = 0;
  std::vector<std::int64_t> memory;
  friend bool operator==(const TraceResult&, const TraceResult&) = default;
};

struct Trace {
  nlohmann::json config = nlohmann::json::object();
  std::vector<TraceEvent> events;
  std::optional<TraceResult> result;  // absent while the run is in flight

  bool complete() const { return result.has_value(); }
  friend bool operator==(const Trace&, const Trace&) = default;
};

// Trace file (`.emtr`).
std::string write_trace(const Trace& trace);
Trace read_trace(std::string_view text);

struct GraphNode {
  std::int64_t activation = 0;
  std::string fragment;
  CoreId core = 0;
  Cycle start_cycle = 0;
  Cycle end_cycle = 0;
  std::optional<Cycle> first_payload;
  std::string role;
  bool inlined = false;
};

struct GraphEdge {
  enum class Kind { Rent, Return } kind = Kind::Rent;
  std::int64_t from = 0;
  std::int64_t to = 0;
  friend bool operator==(const GraphEdge&, const GraphEdge&) = default;
};

struct ProcessingGraph {
  std::vector<GraphNode> nodes;  // sorted by activation
  std::vector<GraphEdge> edges;

  const GraphNode* find(std::int64_t activation) const;
};

// O for the root, H/L/+/- for the expression kernel's fragments, the fragment
// name otherwise.
std::string role_label(std::string_view fragment, bool is_root);

ProcessingGraph build_graph(const Trace& trace);
std::string emit_dot(const ProcessingGraph& graph);

struct Stats {
  Cycle total_cycles = 0;
  std::int64_t payload_retired = 0;
  std::int64_t meta_retired = 0;
  std::vector<int> busy_cores_per_cycle;  // index 0 is cycle 1
  Ratio average_busy_cores{0};
  std::size_t max_cores_used = 0;       // peak simultaneously occupied cores
  std::size_t distinct_cores_used = 0;
  std::int64_t blocked_cycles = 0;      // summed over cores
  std::map<std::string, std::int64_t> payload_per_fragment;

  friend bool operator==(const Stats&, const Stats&) = default;
};

Stats compute_stats(const Trace& trace);

}  // namespace empa
