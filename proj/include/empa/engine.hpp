#pragma once

// The whole machine: a root core, a rentable pool, optional reserved
// interrupt cores, and a deterministic cycle loop over them.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "empa/isa.hpp"
#include "empa/trace.hpp"

namespace empa {

enum class Model { Empa, Spa };

std::string_view to_string(Model model);
std::optional<Model> parse_model(std::string_view text);

struct InterruptPlan {
  Cycle fire_cycle = 0;
  std::string isr_fragment;
};

struct MachineConfig {
  // Total cores including the root; nullopt means unlimited.
  std::optional<std::size_t> pool_size;
  Model model = Model::Empa;
  // Extra cores outside the pool, kept for interrupt service.
  std::size_t reserved_interrupt_cores = 0;
  Cycle spa_context_switch_penalty = 2000;
  std::optional<InterruptPlan> interrupt;
  bool trace_enabled = true;
  // Per-cycle structural assertions (pool/link consistency, forest shape).
  bool check_invariants = false;
  Cycle max_cycles = 50'000'000;
};

nlohmann::json config_to_json(const MachineConfig& config);

struct RunResult {
  Cycle cycles = 0;  // last cycle in which a payload retired
  std::vector<std::int64_t> memory;
  bool halted_cleanly = false;
  std::optional<std::string> deadlock;
  Stats stats;
  std::optional<Trace> trace;
  std::optional<Cycle> interrupt_latency;
  // First interrupt cycle through the handler's last payload, inclusive.
  std::optional<Cycle> interrupt_service;
  std::array<std::int64_t, kNumRegisters> root_registers{};
  std::array<std::optional<std::int64_t>, kNumLinks> root_latches{};
};

// Throws MODEL_MISMATCH, NO_RESERVED_CORE, INVALID_CONFIG, INVALID_OBJECT,
// RUNTIME_FAULT, LINK_BUSY, FAULT_ORPHAN.
RunResult run(const ObjectCode& object, const MachineConfig& config);

// run() with `plan` installed; EMPA needs at least one reserved core.
RunResult inject_interrupt(const ObjectCode& object, MachineConfig config, InterruptPlan plan);

// base.cycles / test.cycles; NOT_CLEAN unless both halted cleanly.
Ratio speedup(const RunResult& base, const RunResult& test);

}  // namespace empa
