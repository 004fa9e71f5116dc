#include "empa/core.hpp"

#include <algorithm>

#include "empa/error.hpp"

namespace empa {

std::optional<std::size_t> Program::find(std::string_view name) const {
  for (std::size_t i = 0; i < fragments.size(); ++i) {
    if (fragments[i].name == name) return i;
  }
  return std::nullopt;
}

Program load_program(const ObjectCode& object) {
  Program program;
  program.memory = object.initial_memory();
  for (std::size_t i = 0; i < object.fragments.size(); ++i) {
    if (object.fragments[i].name == object.entry) program.root = i;
  }
  for (const Fragment& frag : object.fragments) {
    ExecFragment ef{frag.name, frag.kind, {}};
    for (const Instruction& in : frag.code) {
      ExecInstruction ei;
      ei.op = in.op;
      ei.arity = static_cast<std::uint8_t>(in.operands.size());
      for (std::size_t k = 0; k < in.operands.size(); ++k) {
        const Operand& o = in.operands[k];
        ExecOperand& eo = ei.operands[k];
        if (const auto* r = std::get_if<Register>(&o)) {
          eo = {ExecOperand::Kind::Reg, r->index};
        } else if (const auto* p = std::get_if<LatchRef>(&o)) {
          eo = {ExecOperand::Kind::Latch, p->link};
        } else if (const auto* v = std::get_if<std::int64_t>(&o)) {
          eo = {ExecOperand::Kind::Imm, *v};
        } else {
          const std::string& name = std::get<Label>(o).name;
          const std::uint8_t allowed = opcode_info(in.op).kinds[k];
          std::int64_t value = 0;
          if (allowed & kCodeLabel) {
            value = static_cast<std::int64_t>(frag.labels.at(name));
          } else if (allowed & kFragment) {
            for (std::size_t f = 0; f < object.fragments.size(); ++f) {
              if (object.fragments[f].name == name) value = static_cast<std::int64_t>(f);
            }
          } else {
            value = object.data_address(name).value();
          }
          eo = {ExecOperand::Kind::Imm, value};
        }
      }
      ef.code.push_back(ei);
    }
    program.fragments.push_back(std::move(ef));
  }
  return program;
}

bool latch_put(Link& link, std::int64_t value, Cycle now) {
  if (link.latch.full()) return false;
  link.latch.value = value;
  link.latch.fill_cycle = now;
  return true;
}

std::string_view to_string(CoreState state) {
  switch (state) {
    case CoreState::InPool: return "in-pool";
    case CoreState::Running: return "running";
    case CoreState::BlockedLatchRead: return "blocked-latch-read";
    case CoreState::BlockedLatchWrite: return "blocked-latch-write";
    case CoreState::BlockedSignal: return "blocked-signal";
    case CoreState::Halted: return "halted";
    case CoreState::ContextSwitch: return "context-switch";
  }
  return "?";
}

void CoreRecord::reset() {
  frames.clear();
  blocked_link.reset();
  switch_remaining = 0;
  state = CoreState::InPool;
  terminated = false;
}

namespace {

[[noreturn]] void fault(const CoreRecord& core, const std::string& what) {
  throw Error(Errc::RuntimeFault, "core " + std::to_string(core.id) + ": " + what);
}

std::uint64_t as_unsigned(std::int64_t v) { return static_cast<std::uint64_t>(v); }

// Moves the program counter and applies zero-overhead loop bookkeeping for
// the new position.
void jump(Frame& f, std::size_t pc) {
  f.pc = pc;
  while (!f.loops.empty()) {
    LoopEntry& loop = f.loops.back();
    if (f.pc == loop.end) {
      if (--loop.remaining > 0) {
        f.pc = loop.start;
        if (loop.start != loop.end) break;
        continue;
      }
      f.loops.pop_back();
      continue;
    }
    if (f.pc < loop.start || f.pc > loop.end) {
      f.loops.pop_back();  // left the body by a branch
      continue;
    }
    break;
  }
}

struct Outcome {
  std::optional<BlockReason> blocked;
  std::uint8_t link = 0;
  bool finished = false;  // frame completed (QRET / QEND / implicit end)
  bool halted = false;
};

class Executor {
 public:
  Executor(CoreRecord& core, CoreHost& host, Cycle now) : core_(core), host_(host), now_(now) {}

  Outcome execute(Frame& f, const ExecInstruction& in) {
    consumed_.clear();
    return is_meta(in.op) ? meta(f, in) : payload(f, in);
  }

  Outcome finish_stream(Frame& f) {
    if (Outcome o = check_orphans(f); o.blocked) return o;
    if (Link* pl = host_.parent_link(f)) pl->up.raise(now_);
    return {std::nullopt, 0, true, false};
  }

 private:
  std::optional<std::int64_t> read(Frame& f, const ExecOperand& o, Outcome& out) {
    switch (o.kind) {
      case ExecOperand::Kind::Reg: return f.regs.at(static_cast<std::size_t>(o.value));
      case ExecOperand::Kind::Imm: return o.value;
      case ExecOperand::Kind::Latch: {
        Link& link = f.links.at(static_cast<std::size_t>(o.value));
        if (!link.latch.readable(now_)) {
          if (!link.latch.full() && !link.live()) {
            fault(core_, "read of vacant link p" + std::to_string(o.value));
          }
          out.blocked = BlockReason::LatchRead;
          out.link = static_cast<std::uint8_t>(o.value);
          return std::nullopt;
        }
        if (std::find(consumed_.begin(), consumed_.end(), &link) == consumed_.end()) {
          consumed_.push_back(&link);
        }
        return *link.latch.value;
      }
    }
    return std::nullopt;
  }

  void commit_consumes(Frame& f) {
    for (Link* link : consumed_) {
      const auto index = static_cast<std::size_t>(link - f.links.data());
      host_.trace(core_, EventKind::Consume,
                  "act=" + std::to_string(f.activation) + " link=p" + std::to_string(index) +
                      " value=" + std::to_string(*link->latch.value) +
                      " fill=" + std::to_string(link->latch.fill_cycle));
      link->latch.value.reset();
      host_.latch_consumed(*link);
    }
  }

  std::int64_t& reg(Frame& f, const ExecOperand& o) { return f.regs.at(static_cast<std::size_t>(o.value)); }

  std::int64_t& mem(std::int64_t address) {
    auto memory = host_.memory();
    if (address < 0 || static_cast<std::size_t>(address) >= memory.size()) {
      fault(core_, "memory address " + std::to_string(address) + " out of range");
    }
    return memory[static_cast<std::size_t>(address)];
  }

  Outcome payload(Frame& f, const ExecInstruction& in) {
    Outcome out;
    std::size_t next = f.pc + 1;
    const auto& ops = in.operands;
    switch (in.op) {
      case Opcode::LDI: reg(f, ops[0]) = ops[1].value; break;
      case Opcode::LD: {
        auto address = read(f, ops[1], out);
        reg(f, ops[0]) = mem(*address);
        break;
      }
      case Opcode::ST: {
        auto address = read(f, ops[0], out);
        mem(*address) = reg(f, ops[1]);
        break;
      }
      case Opcode::MOV: {
        auto v = read(f, ops[1], out);
        if (out.blocked) return out;
        reg(f, ops[0]) = *v;
        break;
      }
      case Opcode::ADD:
      case Opcode::SUB:
      case Opcode::MUL: {
        auto a = read(f, ops[1], out);
        if (out.blocked) return out;
        auto b = read(f, ops[2], out);
        if (out.blocked) return out;
        std::uint64_t r = 0;
        if (in.op == Opcode::ADD) r = as_unsigned(*a) + as_unsigned(*b);
        if (in.op == Opcode::SUB) r = as_unsigned(*a) - as_unsigned(*b);
        if (in.op == Opcode::MUL) r = as_unsigned(*a) * as_unsigned(*b);
        reg(f, ops[0]) = static_cast<std::int64_t>(r);
        break;
      }
      case Opcode::CMP: {
        auto a = read(f, ops[0], out);
        if (out.blocked) return out;
        auto b = read(f, ops[1], out);
        if (out.blocked) return out;
        f.flags = {*a < *b, *a == *b};
        break;
      }
      case Opcode::BEQ:
        if (f.flags.eq) next = static_cast<std::size_t>(ops[0].value);
        break;
      case Opcode::BNE:
        if (!f.flags.eq) next = static_cast<std::size_t>(ops[0].value);
        break;
      case Opcode::BLT:
        if (f.flags.lt) next = static_cast<std::size_t>(ops[0].value);
        break;
      case Opcode::JMP: next = static_cast<std::size_t>(ops[0].value); break;
      default: fault(core_, "not a payload opcode");
    }
    commit_consumes(f);
    jump(f, next);
    return out;
  }

  Outcome check_orphans(const Frame& f) {
    for (std::size_t i = 0; i < f.links.size(); ++i) {
      if (f.links[i].live()) {
        throw Error(Errc::FaultOrphan, "core " + std::to_string(core_.id) + " finished '" +
                                           host_.program().fragments[f.fragment].name +
                                           "' with a live child on p" + std::to_string(i));
      }
    }
    return {};
  }

  Outcome put_to_parent(Frame& f, std::int64_t value) {
    Link* pl = host_.parent_link(f);
    if (pl == nullptr) return {};
    if (!latch_put(*pl, value, now_)) return {BlockReason::LatchWrite, 0, false, false};
    host_.trace(core_, EventKind::Put, "act=" + std::to_string(f.activation) + " value=" + std::to_string(value));
    return {};
  }

  Outcome meta(Frame& f, const ExecInstruction& in) {
    Outcome out;
    const auto& ops = in.operands;
    auto link_index = [&](const ExecOperand& o) { return static_cast<std::uint8_t>(o.value); };
    switch (in.op) {
      case Opcode::QRENT: {
        std::array<ExecOperand, 2> args{};
        const std::size_t count = in.arity - 2u;
        for (std::size_t k = 0; k < count; ++k) {
          args[k] = ops[k + 2];
          if (args[k].kind == ExecOperand::Kind::Reg) args[k] = {ExecOperand::Kind::Imm, reg(f, ops[k + 2])};
        }
        host_.issue_rent(core_, link_index(ops[0]), static_cast<std::size_t>(ops[1].value),
                         std::span<const ExecOperand>(args.data(), count));
        break;
      }
      case Opcode::QRET: {
        check_orphans(f);
        const std::int64_t value = reg(f, ops[0]);
        if (Outcome o = put_to_parent(f, value); o.blocked) return o;
        if (Link* pl = host_.parent_link(f)) pl->up.raise(now_);
        out.finished = true;
        break;
      }
      case Opcode::QPUT: {
        if (Outcome o = put_to_parent(f, reg(f, ops[0])); o.blocked) return o;
        break;
      }
      case Opcode::QEND: return finish_stream(f);
      case Opcode::QKILL: host_.kill_link(core_, link_index(ops[0])); break;
      case Opcode::QLOOP: {
        const std::int64_t count = ops[0].kind == ExecOperand::Kind::Reg ? reg(f, ops[0]) : ops[0].value;
        const auto end = static_cast<std::size_t>(ops[1].value);
        if (count <= 0) {
          jump(f, end);
          return out;
        }
        if (f.loops.size() >= kMaxLoopDepth) fault(core_, "hardware loop stack overflow");
        f.loops.push_back({f.pc + 1, end, count});
        jump(f, f.pc + 1);
        return out;
      }
      case Opcode::QSIG: {
        f.links.at(link_index(ops[0])).down.raise(now_);
        host_.trace(core_, EventKind::Signal, "act=" + std::to_string(f.activation) + " link=p" +
                                         std::to_string(ops[0].value) + " dir=down");
        break;
      }
      case Opcode::QWSIG: {
        Link& link = f.links.at(link_index(ops[0]));
        // The return signal is observable from the cycle after it was raised.
        if (link.live() || (link.up.raised && !link.up.visible(now_))) {
          return {BlockReason::Signal, link_index(ops[0]), false, false};
        }
        link.up.raised = false;
        break;
      }
      case Opcode::HALT:
        f.halted = true;
        out.halted = true;
        return out;
      default: fault(core_, "not a meta opcode");
    }
    if (!out.finished) jump(f, f.pc + 1);
    return out;
  }

  CoreRecord& core_;
  CoreHost& host_;
  Cycle now_;
  std::vector<Link*> consumed_;
};

CoreState blocked_state(BlockReason reason) {
  switch (reason) {
    case BlockReason::LatchRead: return CoreState::BlockedLatchRead;
    case BlockReason::LatchWrite: return CoreState::BlockedLatchWrite;
    case BlockReason::Signal: return CoreState::BlockedSignal;
  }
  return CoreState::Running;
}

std::string_view block_text(BlockReason reason) {
  switch (reason) {
    case BlockReason::LatchRead: return "latch-read";
    case BlockReason::LatchWrite: return "latch-write";
    case BlockReason::Signal: return "signal";
  }
  return "?";
}

}  // namespace

StepEffect step(CoreRecord& core, CoreHost& host, Cycle now) {
  StepEffect effect;
  Executor exec(core, host, now);
  const Program& program = host.program();
  for (;;) {
    if (core.frames.empty() || core.terminated || core.state == CoreState::InPool) {
      effect.finished = true;
      return effect;
    }
    if (core.state == CoreState::ContextSwitch) return effect;
    Frame& f = core.top();
    if (f.halted) {
      core.state = CoreState::Halted;
      effect.halted = true;
      return effect;
    }
    const ExecFragment& frag = program.fragments[f.fragment];

    Outcome outcome;
    Opcode op = Opcode::QEND;
    bool implicit_end = false;
    if (frag.kind == FragmentKind::Stream) {
      Link* pl = host.parent_link(f);
      implicit_end = pl != nullptr && pl->down.visible(now);
    }
    if (implicit_end) {
      outcome = exec.finish_stream(f);
    } else {
      if (f.pc >= frag.code.size()) {
        fault(core, "fell off the end of '" + frag.name + "'");
      }
      const ExecInstruction& in = frag.code[f.pc];
      op = in.op;
      if (is_payload(op) && core.payload_this_cycle) {
        if (core.blocked()) core.state = CoreState::Running;
        return effect;
      }
      const std::size_t pc = f.pc;
      const std::int64_t activation = f.activation;
      outcome = exec.execute(f, in);
      if (!outcome.blocked) {
        host.trace(core, is_payload(op) ? EventKind::RetirePayload : EventKind::RetireMeta,
                   "act=" + std::to_string(activation) + " pc=" + std::to_string(pc) +
                       " op=" + std::string(mnemonic(op)));
      }
    }

    if (outcome.blocked) {
      const CoreState target = blocked_state(*outcome.blocked);
      if (core.state != target || core.blocked_link != outcome.link) {
        core.state = target;
        core.blocked_link = outcome.link;
        host.trace(core, EventKind::Block,
                   "act=" + std::to_string(f.activation) + " reason=" +
                       std::string(block_text(*outcome.blocked)) + " link=p" + std::to_string(outcome.link));
      }
      effect.blocked = outcome.blocked;
      return effect;
    }
    if (core.blocked()) {
      host.trace(core, EventKind::Unblock, "act=" + std::to_string(f.activation));
      core.blocked_link.reset();
    }
    core.state = CoreState::Running;
    ++core.retired_this_cycle;
    if (is_payload(op) && !implicit_end) {
      core.payload_this_cycle = true;
      effect.payload = true;
    } else {
      ++effect.metas;
    }
    if (outcome.halted) {
      core.state = CoreState::Halted;
      effect.halted = true;
      return effect;
    }
    if (outcome.finished) host.frame_finished(core, op);
  }
}

}  // namespace empa
