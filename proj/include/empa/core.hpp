#pragma once

// Per-core state machine. A core owns a stack of frames: the bottom frame is
// the fragment the core was rented for; frames above it are call fragments
// spliced in by the supervisor's inline fallback or an interrupt handler.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "empa/event.hpp"
#include "empa/isa.hpp"

namespace empa {

// Object code with every symbol resolved to a number: code labels to
// instruction indices, data labels to addresses, fragment names to indices.
struct ExecOperand {
  enum class Kind : std::uint8_t { Reg, Latch, Imm } kind = Kind::Imm;
  std::int64_t value = 0;
};

struct ExecInstruction {
  Opcode op = Opcode::HALT;
  std::uint8_t arity = 0;
  std::array<ExecOperand, 4> operands{};
};

struct ExecFragment {
  std::string name;
  FragmentKind kind = FragmentKind::Call;
  std::vector<ExecInstruction> code;
};

struct Program {
  std::vector<ExecFragment> fragments;
  std::size_t root = 0;
  std::vector<std::int64_t> memory;

  std::optional<std::size_t> find(std::string_view name) const;
};

// Requires a valid object.
Program load_program(const ObjectCode& object);

// Depth-1 storage between a parent and the child on one of its links.
struct Latch {
  std::optional<std::int64_t> value;
  Cycle fill_cycle = 0;

  bool full() const { return value.has_value(); }
  // A value put in cycle t is readable from t+1 on.
  bool readable(Cycle now) const { return value.has_value() && fill_cycle < now; }
};

struct Signal {
  bool raised = false;
  Cycle cycle = 0;

  void raise(Cycle now) {
    raised = true;
    cycle = now;
  }
  bool visible(Cycle now) const { return raised && cycle < now; }
};

struct Link {
  std::optional<CoreId> child;  // granted child still executing
  bool pending = false;         // rent queued, not yet granted
  bool inlined = false;         // rent being executed as a spliced frame
  Latch latch;
  Signal up;    // child -> parent: raised when the child returns or ends
  Signal down;  // parent -> child: QSIG

  bool live() const { return child.has_value() || pending || inlined; }
};

// put: empty -> full(value, cycle). Returns false (writer blocks) when full.
bool latch_put(Link& link, std::int64_t value, Cycle now);

struct ParentRef {
  CoreId core = 0;
  std::uint32_t depth = 0;  // frame index on the parent core
  std::uint8_t link = 0;
};

struct LoopEntry {
  std::size_t start = 0;
  std::size_t end = 0;
  std::int64_t remaining = 0;
};

inline constexpr std::size_t kMaxLoopDepth = 8;

enum class FrameKind : std::uint8_t { Rented, Inline, Interrupt };

struct Flags {
  bool lt = false;
  bool eq = false;
};

struct Frame {
  std::size_t fragment = 0;
  std::size_t pc = 0;
  std::array<std::int64_t, kNumRegisters> regs{};
  Flags flags;
  std::vector<LoopEntry> loops;
  std::array<Link, kNumLinks> links;
  std::optional<ParentRef> parent;
  std::int64_t activation = 0;
  FrameKind kind = FrameKind::Rented;
  bool halted = false;
};

enum class CoreState : std::uint8_t {
  InPool,
  Running,
  BlockedLatchRead,
  BlockedLatchWrite,
  BlockedSignal,
  Halted,
  ContextSwitch,  // single-processor interrupt entry/exit penalty
};

std::string_view to_string(CoreState state);

struct CoreRecord {
  CoreId id = 0;
  CoreState state = CoreState::InPool;
  std::vector<Frame> frames;
  bool supervisor = false;  // reserved interrupt core
  std::optional<std::uint8_t> blocked_link;
  std::int64_t switch_remaining = 0;

  // Per-cycle bookkeeping, reset by the engine at the start of each cycle.
  bool payload_this_cycle = false;
  int retired_this_cycle = 0;
  bool terminated = false;  // returned/ended/killed; released at end of cycle

  bool active() const {
    return state != CoreState::InPool && state != CoreState::Halted && !terminated;
  }
  bool blocked() const {
    return state == CoreState::BlockedLatchRead || state == CoreState::BlockedLatchWrite ||
           state == CoreState::BlockedSignal;
  }
  Frame& top() { return frames.back(); }
  const Frame& top() const { return frames.back(); }
  // Clears registers, flags and links ("logically brand new").
  void reset();
};

enum class BlockReason : std::uint8_t { LatchRead, LatchWrite, Signal };

// Services a core needs from the machine around it.
class CoreHost {
 public:
  virtual ~CoreHost() = default;

  virtual const Program& program() const = 0;
  virtual std::span<std::int64_t> memory() = 0;
  // The link on the parent side that `frame` reports to; null for roots and
  // interrupt handlers.
  virtual Link* parent_link(const Frame& frame) = 0;
  // QRENT: throws LINK_BUSY if the link is live.
  virtual void issue_rent(CoreRecord& core, std::uint8_t link, std::size_t fragment,
                          std::span<const ExecOperand> args) = 0;
  virtual void kill_link(CoreRecord& core, std::uint8_t link) = 0;
  virtual void latch_consumed(Link& link) = 0;
  // Called after the frame's result (if any) has been delivered; the host pops
  // or retires the frame.
  virtual void frame_finished(CoreRecord& core, Opcode how) = 0;
  virtual void trace(const CoreRecord& core, EventKind kind, std::string detail) = 0;
};

struct StepEffect {
  bool payload = false;
  int metas = 0;
  std::optional<BlockReason> blocked;
  bool halted = false;
  bool finished = false;  // the core has no more work (terminated or back to idle)
};

// Runs a core for the rest of the current cycle: any number of metas around at
// most one payload instruction, stopping at a block. Safe to call again in the
// same cycle after a wake-up; the per-cycle payload budget is kept on the core.
StepEffect step(CoreRecord& core, CoreHost& host, Cycle now);

}  // namespace empa
