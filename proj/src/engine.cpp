#include "empa/engine.hpp"

#include <deque>
#include <set>
#include <sstream>

#include "empa/core.hpp"
#include "empa/error.hpp"
#include "empa/supervisor.hpp"

namespace empa {

std::string_view to_string(Model model) { return model == Model::Empa ? "empa" : "spa"; }

std::optional<Model> parse_model(std::string_view text) {
  if (text == "empa") return Model::Empa;
  if (text == "spa") return Model::Spa;
  return std::nullopt;
}

nlohmann::json config_to_json(const MachineConfig& config) {
  nlohmann::json j = nlohmann::json::object();
  if (config.pool_size) {
    j["pool"] = *config.pool_size;
  } else {
    j["pool"] = "unlimited";
  }
  j["model"] = std::string(to_string(config.model));
  j["reserved"] = config.reserved_interrupt_cores;
  j["penalty"] = config.spa_context_switch_penalty;
  if (config.interrupt) {
    j["interrupt"] = {{"fire", config.interrupt->fire_cycle}, {"isr", config.interrupt->isr_fragment}};
  } else {
    j["interrupt"] = nullptr;
  }
  return j;
}

namespace {

std::string link_name(std::size_t link) { return "p" + std::to_string(link); }

class Machine final : public CoreHost {
 public:
  Machine(const ObjectCode& object, const MachineConfig& config)
      : program_(load_program(object)),
        config_(config),
        supervisor_(config.model == Model::Empa && !config.pool_size.has_value()) {
    if (config.model == Model::Spa && object.has_empa_metas()) {
      throw Error(Errc::ModelMismatch, "object uses parallel metainstructions; assemble it in spa mode");
    }
    if (config.pool_size && *config.pool_size == 0) throw Error(Errc::InvalidConfig, "pool size must be >= 1");
    if (config.spa_context_switch_penalty < 0) throw Error(Errc::InvalidConfig, "penalty must be >= 0");
    if (config.interrupt) {
      const auto isr = program_.find(config.interrupt->isr_fragment);
      if (!isr) throw Error(Errc::InvalidConfig, "no fragment '" + config.interrupt->isr_fragment + "'");
      if (program_.fragments[*isr].kind != FragmentKind::Call) {
        throw Error(Errc::InvalidConfig, "interrupt handler must be a call fragment");
      }
      if (config.interrupt->fire_cycle < 1) throw Error(Errc::InvalidConfig, "fire cycle must be >= 1");
      if (config.model == Model::Empa && config.reserved_interrupt_cores == 0) {
        throw Error(Errc::NoReservedCore, "interrupt plan needs a reserved interrupt core");
      }
      isr_fragment_ = *isr;
    }

    CoreRecord& root = new_core();
    Frame frame;
    frame.fragment = program_.root;
    frame.activation = next_activation_++;
    root.frames.push_back(frame);
    root.state = CoreState::Running;
    if (config.model == Model::Empa) {
      for (std::size_t i = 0; i < config.reserved_interrupt_cores; ++i) {
        CoreRecord& core = new_core();
        core.supervisor = true;
        supervisor_.add_reserved(core.id);
      }
      const std::size_t pool = config.pool_size.value_or(1);
      for (std::size_t i = 1; i < pool; ++i) supervisor_.add_free(new_core().id);
    }
  }

  RunResult run() {
    while (true) {
      ++now_;
      if (now_ > config_.max_cycles) {
        throw Error(Errc::RuntimeFault, "cycle limit " + std::to_string(config_.max_cycles) + " exceeded");
      }
      if (now_ == 1) emit(0, EventKind::StartFragment, "act=0");
      run_cycle();
      if (config_.check_invariants) check_invariants();
      if (done()) break;
      const StallView view{retired_any_, grants_this_cycle_, other_progress_};
      const StallDecision decision =
          supervisor_.detect_stall(view, [this](const RentRequest& r) { return args_ready(r); });
      if (decision.kind == StallDecision::Kind::InlineFallback) {
        splice(*decision.request);
      } else if (decision.kind == StallDecision::Kind::Deadlock) {
        deadlock_ = deadlock_report();
        break;
      }
    }
    return result();
  }

  // CoreHost

  const Program& program() const override { return program_; }
  std::span<std::int64_t> memory() override { return program_.memory; }

  Link* parent_link(const Frame& frame) override {
    if (!frame.parent) return nullptr;
    const ParentRef& p = *frame.parent;
    return &cores_[p.core].frames[p.depth].links[p.link];
  }

  void issue_rent(CoreRecord& core, std::uint8_t link, std::size_t fragment,
                  std::span<const ExecOperand> args) override {
    Frame& frame = core.top();
    Link& l = frame.links.at(link);
    if (l.live()) {
      throw Error(Errc::LinkBusy, "core " + std::to_string(core.id) + " rents on busy link " + link_name(link));
    }
    l.pending = true;
    RentRequest request;
    request.id = next_request_++;
    request.requester = core.id;
    request.depth = static_cast<std::uint32_t>(core.frames.size() - 1);
    request.link = link;
    request.fragment = fragment;
    request.kind = program_.fragments[fragment].kind;
    request.args.assign(args.begin(), args.end());
    request.issue_cycle = now_;
    supervisor_.request_rent(std::move(request));
    grant_ready();
  }

  void kill_link(CoreRecord& core, std::uint8_t link) override {
    const auto depth = static_cast<std::uint32_t>(core.frames.size() - 1);
    Link& l = core.top().links.at(link);
    if (l.pending) supervisor_.cancel(core.id, depth, link);
    if (l.child) kill_core(cores_[*l.child]);
    l = Link{};
  }

  void latch_consumed(Link& link) override {
    if (!link.child) return;
    CoreRecord& writer = cores_[*link.child];
    if (writer.state == CoreState::BlockedLatchWrite) worklist_.insert(writer.id);
  }

  void frame_finished(CoreRecord& core, Opcode) override {
    Frame& frame = core.top();
    std::string detail = "act=" + std::to_string(frame.activation);
    if (frame.parent) {
      const ParentRef& p = *frame.parent;
      detail += " parent_act=" + std::to_string(cores_[p.core].frames[p.depth].activation);
    }
    emit(core.id, EventKind::Return, detail);
    switch (frame.kind) {
      case FrameKind::Inline:
        parent_link(frame)->inlined = false;
        core.frames.pop_back();
        core.state = CoreState::Running;
        break;
      case FrameKind::Rented:
        if (Link* l = parent_link(frame)) l->child.reset();
        core.terminated = true;
        break;
      case FrameKind::Interrupt:
        if (core.supervisor) {
          core.terminated = true;
        } else {
          core.frames.pop_back();
          core.switch_remaining = config_.spa_context_switch_penalty;
          core.state = core.switch_remaining > 0 ? CoreState::ContextSwitch : CoreState::Running;
        }
        break;
    }
  }

  void trace(const CoreRecord& core, EventKind kind, std::string detail) override {
    if (kind == EventKind::RetirePayload) {
      last_payload_ = now_;
      if (!core.frames.empty() && core.top().kind == FrameKind::Interrupt) {
        if (!isr_first_payload_) {
          isr_first_payload_ = now_;
          emit(core.id, EventKind::InterruptServe, "act=" + std::to_string(core.top().activation));
        }
        isr_last_payload_ = now_;
      }
    }
    if (kind == EventKind::RetirePayload || kind == EventKind::RetireMeta) retired_any_ = true;
    emit(core.id, kind, std::move(detail));
  }

 private:
  CoreRecord& new_core() {
    CoreRecord core;
    core.id = static_cast<CoreId>(cores_.size());
    cores_.push_back(std::move(core));
    return cores_.back();
  }

  void emit(CoreId core, EventKind kind, std::string detail) {
    const CoreRecord& c = cores_[core];
    std::string fragment = c.frames.empty() ? std::string() : program_.fragments[c.top().fragment].name;
    events_.push_back({now_, core, kind, std::move(fragment), std::move(detail)});
  }

  bool args_ready(const RentRequest& request) const {
    const Frame& owner = cores_[request.requester].frames[request.depth];
    for (const ExecOperand& arg : request.args) {
      if (arg.kind == ExecOperand::Kind::Latch &&
          !owner.links[static_cast<std::size_t>(arg.value)].latch.readable(now_)) {
        return false;
      }
    }
    return true;
  }

  // Latch arguments are read without being consumed.
  std::array<std::int64_t, 2> resolve_args(const RentRequest& request) const {
    std::array<std::int64_t, 2> values{};
    const Frame& owner = cores_[request.requester].frames[request.depth];
    for (std::size_t k = 0; k < request.args.size() && k < values.size(); ++k) {
      const ExecOperand& arg = request.args[k];
      values[k] = arg.kind == ExecOperand::Kind::Latch
                      ? *owner.links[static_cast<std::size_t>(arg.value)].latch.value
                      : arg.value;
    }
    return values;
  }

  Frame make_frame(const RentRequest& request, FrameKind kind) const {
    Frame frame;
    frame.fragment = request.fragment;
    const auto args = resolve_args(request);
    frame.regs[0] = args[0];
    frame.regs[1] = args[1];
    frame.parent = ParentRef{request.requester, request.depth, request.link};
    frame.kind = kind;
    return frame;
  }

  std::string link_detail(const RentRequest& request, std::int64_t activation) const {
    const Frame& owner = cores_[request.requester].frames[request.depth];
    return "act=" + std::to_string(activation) + " parent_act=" + std::to_string(owner.activation) +
           " parent_core=" + std::to_string(request.requester) + " link=" + link_name(request.link) +
           " req=" + std::to_string(request.id);
  }

  void grant_ready() {
    const auto grants = supervisor_.tick_grants([this](const RentRequest& r) { return args_ready(r); },
                                                [this] { return new_core().id; });
    for (const Grant& grant : grants) apply_grant(grant);
  }

  void apply_grant(const Grant& grant) {
    const RentRequest& request = grant.request;
    Frame frame = make_frame(request, FrameKind::Rented);
    frame.activation = next_activation_++;
    Link& link = cores_[request.requester].frames[request.depth].links[request.link];
    link = Link{};
    link.child = grant.core;
    CoreRecord& child = cores_[grant.core];
    child.reset();
    child.frames.push_back(std::move(frame));
    child.state = CoreState::Running;
    ++grants_this_cycle_;
    emit(child.id, EventKind::Grant, link_detail(request, child.top().activation));
    emit(child.id, EventKind::StartFragment, "act=" + std::to_string(child.top().activation));
    worklist_.insert(child.id);
  }

  // Runs a stalled call request on its requester's core as a nested frame.
  void splice(const RentRequest& pending) {
    const RentRequest request = *supervisor_.take(pending.id);
    Frame frame = make_frame(request, FrameKind::Inline);
    frame.activation = next_activation_++;
    CoreRecord& core = cores_[request.requester];
    Link& link = core.frames[request.depth].links[request.link];
    link = Link{};
    link.inlined = true;
    const std::string detail = link_detail(request, frame.activation);
    if (core.blocked()) emit(core.id, EventKind::Unblock, "act=" + std::to_string(core.top().activation));
    core.frames.push_back(std::move(frame));
    core.state = CoreState::Running;
    core.blocked_link.reset();
    emit(core.id, EventKind::InlineSplice, detail);
    emit(core.id, EventKind::StartFragment, "act=" + std::to_string(core.top().activation));
  }

  void kill_core(CoreRecord& core) {
    for (std::size_t depth = 0; depth < core.frames.size(); ++depth) {
      for (std::size_t i = 0; i < core.frames[depth].links.size(); ++i) {
        Link& l = core.frames[depth].links[i];
        if (l.pending) supervisor_.cancel(core.id, static_cast<std::uint32_t>(depth), static_cast<std::uint8_t>(i));
        if (l.child) kill_core(cores_[*l.child]);
        l = Link{};
      }
    }
    core.terminated = true;
    killed_.insert(core.id);
  }

  void interrupts() {
    if (!config_.interrupt || !isr_fragment_) return;
    const InterruptPlan& plan = *config_.interrupt;
    if (config_.model == Model::Empa) {
      if (now_ == plan.fire_cycle) {
        for (CoreRecord& core : cores_) {
          if (core.supervisor && core.frames.empty()) {
            isr_core_ = core.id;
            break;
          }
        }
        if (!isr_core_) throw Error(Errc::NoReservedCore, "no idle reserved core at cycle " + std::to_string(now_));
        emit(*isr_core_, EventKind::InterruptFire, "isr=" + plan.isr_fragment);
        other_progress_ = true;
      } else if (now_ == plan.fire_cycle + 1 && isr_core_) {
        CoreRecord& core = cores_[*isr_core_];
        Frame frame;
        frame.fragment = *isr_fragment_;
        frame.kind = FrameKind::Interrupt;
        frame.activation = next_activation_++;
        core.reset();
        core.frames.push_back(std::move(frame));
        core.state = CoreState::Running;
        const std::string act = "act=" + std::to_string(core.top().activation);
        emit(core.id, EventKind::Grant, act + " interrupt=1");
        emit(core.id, EventKind::StartFragment, act);
      }
    } else if (now_ == plan.fire_cycle) {
      CoreRecord& core = cores_[0];
      Frame frame;
      frame.fragment = *isr_fragment_;
      frame.kind = FrameKind::Interrupt;
      frame.activation = next_activation_++;
      emit(0, EventKind::InterruptFire, "isr=" + plan.isr_fragment);
      core.frames.push_back(std::move(frame));
      core.state = CoreState::ContextSwitch;
      core.switch_remaining = config_.spa_context_switch_penalty;
      emit(0, EventKind::InlineSplice, "act=" + std::to_string(core.top().activation) + " interrupt=1");
      emit(0, EventKind::StartFragment, "act=" + std::to_string(core.top().activation));
    }
  }

  void run_cycle() {
    retired_any_ = false;
    other_progress_ = false;
    grants_this_cycle_ = 0;
    for (CoreRecord& core : cores_) {
      core.payload_this_cycle = false;
      core.retired_this_cycle = 0;
    }
    interrupts();
    for (CoreRecord& core : cores_) {
      if (core.state != CoreState::ContextSwitch) continue;
      if (core.switch_remaining > 0) {
        --core.switch_remaining;
        other_progress_ = true;
      } else {
        core.state = CoreState::Running;
      }
    }
    grant_ready();
    for (const CoreRecord& core : cores_) {
      if (core.active()) worklist_.insert(core.id);
    }
    while (!worklist_.empty()) {
      const CoreId id = *worklist_.begin();
      worklist_.erase(worklist_.begin());
      step(cores_[id], *this, now_);
    }
    for (CoreRecord& core : cores_) {
      if (!core.terminated) continue;
      std::string detail = core.frames.empty() ? std::string() : "act=" + std::to_string(core.frames.front().activation);
      if (killed_.count(core.id) != 0) detail += " killed=1";
      emit(core.id, EventKind::Release, detail);
      other_progress_ = true;  // a release frees a core and raises the return signal
      core.reset();
      supervisor_.release(core.id);
    }
    killed_.clear();
    supervisor_.end_cycle();
  }

  bool done() const {
    const CoreRecord& root = cores_[0];
    if (root.state != CoreState::Halted || root.frames.size() != 1) return false;
    if (!supervisor_.state().pending.empty()) return false;
    if (config_.interrupt && config_.model == Model::Empa && now_ == config_.interrupt->fire_cycle) return false;
    for (std::size_t i = 1; i < cores_.size(); ++i) {
      if (cores_[i].state != CoreState::InPool) return false;
    }
    return true;
  }

  std::string describe(const CoreRecord& core) const {
    const Frame& top = core.top();
    return "core " + std::to_string(core.id) + " ('" + program_.fragments[top.fragment].name +
           "' act=" + std::to_string(top.activation) + ")";
  }

  std::string deadlock_report() const {
    std::ostringstream os;
    os << "deadlock at cycle " << now_ << "; wait-for:";
    for (const CoreRecord& core : cores_) {
      if (core.frames.empty() || core.state == CoreState::InPool) continue;
      os << "\n  " << describe(core) << ' ' << to_string(core.state);
      if (!core.blocked_link) continue;
      const std::uint8_t index = *core.blocked_link;
      os << " on " << link_name(index);
      if (core.state == CoreState::BlockedLatchWrite) {
        if (core.top().parent) os << " -> parent core " << core.top().parent->core << " has not consumed";
        continue;
      }
      const Link* link = &core.top().links[index];
      if (link->child) {
        os << " -> " << describe(cores_[*link->child]);
      } else if (link->pending) {
        os << " -> pending request";
      } else {
        os << " -> nothing will fill it";
      }
    }
    for (const RentRequest& request : supervisor_.state().pending) {
      os << "\n  pending " << to_string(request.kind) << " request #" << request.id << " '"
         << program_.fragments[request.fragment].name << "' from core " << request.requester << " on "
         << link_name(request.link) << " (issued cycle " << request.issue_cycle << ", "
         << (request.kind == FragmentKind::Stream ? "needs a free core; cannot be inlined" : "no free core")
         << ")";
    }
    return os.str();
  }

  [[noreturn]] void broken(const std::string& what) const {
    throw Error(Errc::RuntimeFault, "invariant violated at cycle " + std::to_string(now_) + ": " + what);
  }

  void check_invariants() const {
    const PoolState& pool = supervisor_.state();
    std::set<CoreId> linked;
    for (const CoreRecord& core : cores_) {
      for (std::size_t depth = 0; depth < core.frames.size(); ++depth) {
        for (std::size_t i = 0; i < kNumLinks; ++i) {
          const Link& l = core.frames[depth].links[i];
          if (!l.child) continue;
          linked.insert(*l.child);
          const CoreRecord& child = cores_[*l.child];
          if (child.frames.empty() || !child.frames.front().parent) broken("dangling link");
          const ParentRef& p = *child.frames.front().parent;
          if (p.core != core.id || p.depth != depth || p.link != i) broken("link and parent ref disagree");
        }
      }
    }
    for (CoreId id : pool.free) {
      if (linked.count(id) != 0) broken("core " + std::to_string(id) + " is both free and linked");
      if (cores_[id].state != CoreState::InPool) broken("free core " + std::to_string(id) + " is not idle");
      if (pool.reserved_supervisor.count(id) != 0) broken("reserved core in the free set");
    }
    for (const CoreRecord& core : cores_) {
      if (core.frames.empty()) continue;
      std::size_t hops = 0;
      const CoreRecord* at = &core;
      while (at->frames.front().parent) {
        at = &cores_[at->frames.front().parent->core];
        if (++hops > cores_.size()) broken("cycle in the rent forest");
      }
      if (at->id != 0 && !at->supervisor) broken("core " + std::to_string(core.id) + " is not rooted");
    }
  }

  RunResult result() const {
    RunResult r;
    r.cycles = last_payload_;
    r.memory = program_.memory;
    r.deadlock = deadlock_;
    r.halted_cleanly = !deadlock_.has_value();
    Trace trace;
    trace.config = config_to_json(config_);
    trace.events = events_;
    trace.result = TraceResult{r.cycles, r.memory};
    r.stats = compute_stats(trace);
    if (config_.trace_enabled) r.trace = std::move(trace);
    if (config_.interrupt && isr_first_payload_) {
      r.interrupt_latency = *isr_first_payload_ - config_.interrupt->fire_cycle;
      r.interrupt_service = *isr_last_payload_ - config_.interrupt->fire_cycle + 1;
    }
    const Frame& root = cores_[0].frames.front();
    r.root_registers = root.regs;
    for (std::size_t i = 0; i < kNumLinks; ++i) r.root_latches[i] = root.links[i].latch.value;
    return r;
  }

  Program program_;
  MachineConfig config_;
  Supervisor supervisor_;
  std::deque<CoreRecord> cores_;  // deque: growth keeps references stable
  std::vector<TraceEvent> events_;
  std::set<CoreId> worklist_;
  std::set<CoreId> killed_;
  Cycle now_ = 0;
  Cycle last_payload_ = 0;
  std::int64_t next_activation_ = 0;
  std::uint64_t next_request_ = 1;
  std::size_t grants_this_cycle_ = 0;
  bool retired_any_ = false;
  bool other_progress_ = false;
  std::optional<std::string> deadlock_;
  std::optional<std::size_t> isr_fragment_;
  std::optional<CoreId> isr_core_;
  std::optional<Cycle> isr_first_payload_;
  std::optional<Cycle> isr_last_payload_;
};

}  // namespace

RunResult run(const ObjectCode& object, const MachineConfig& config) {
  const ValidationReport report = validate(object);
  if (!report.empty()) throw Error(Errc::InvalidObject, format_issue(report.front()));
  Machine machine(object, config);
  return machine.run();
}

RunResult inject_interrupt(const ObjectCode& object, MachineConfig config, InterruptPlan plan) {
  config.interrupt = std::move(plan);
  return run(object, config);
}

Ratio speedup(const RunResult& base, const RunResult& test) {
  if (!base.halted_cleanly || !test.halted_cleanly) {
    throw Error(Errc::NotClean, "speedup needs two cleanly halted runs");
  }
  if (base.cycles <= 0 || test.cycles <= 0) throw Error(Errc::Domain, "speedup of an empty run");
  return Ratio(base.cycles, test.cycles);
}

}  // namespace empa
