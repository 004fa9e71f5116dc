#pragma once

// Chip-level pool: rent requests queue in FIFO order and are matched against
// free cores once per cycle and whenever a new request is issued.

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "empa/core.hpp"

namespace empa {

struct RentRequest {
  std::uint64_t id = 0;
  CoreId requester = 0;
  std::uint32_t depth = 0;  // requester frame that owns the link
  std::uint8_t link = 0;
  std::size_t fragment = 0;
  FragmentKind kind = FragmentKind::Call;
  // Registers are resolved at issue; latch operands stay symbolic until grant.
  std::vector<ExecOperand> args;
  Cycle issue_cycle = 0;
};

struct PoolState {
  std::set<CoreId> free;
  std::deque<RentRequest> pending;
  std::set<CoreId> reserved_supervisor;
  std::vector<CoreId> releasing;  // joins `free` at end of cycle
};

using ArgsReady = std::function<bool(const RentRequest&)>;

// Picks which pending requests to serve, in grant order.
class GrantPolicy {
 public:
  virtual ~GrantPolicy() = default;
  // `free_cores` is nullopt for an unlimited pool.
  virtual std::vector<std::size_t> select(const std::deque<RentRequest>& pending, const ArgsReady& ready,
                                          std::optional<std::size_t> free_cores) const = 0;
};

// Requests still waiting for argument latches are skipped; a request waiting
// only for a core blocks everything behind it.
class FifoGrantPolicy final : public GrantPolicy {
 public:
  std::vector<std::size_t> select(const std::deque<RentRequest>& pending, const ArgsReady& ready,
                                  std::optional<std::size_t> free_cores) const override;
};

struct Grant {
  RentRequest request;
  CoreId core = 0;
};

struct StallView {
  bool retired_any = false;
  std::size_t grants = 0;
  bool other_progress = false;  // e.g. a context switch counting down
};

struct StallDecision {
  enum class Kind { Progress, InlineFallback, Deadlock } kind = Kind::Progress;
  std::optional<RentRequest> request;  // the request to inline
};

class Supervisor {
 public:
  // `unlimited` pools mint a fresh core through `mint` whenever none is free.
  Supervisor(bool unlimited, std::unique_ptr<GrantPolicy> policy = std::make_unique<FifoGrantPolicy>());

  void add_free(CoreId core);
  void add_reserved(CoreId core);
  void request_rent(RentRequest request);
  std::vector<Grant> tick_grants(const ArgsReady& ready, const std::function<CoreId()>& mint);
  // The core becomes grantable from the next cycle.
  void release(CoreId core);
  void end_cycle();
  bool cancel(CoreId requester, std::uint32_t depth, std::uint8_t link);
  std::optional<RentRequest> take(std::uint64_t id);

  StallDecision detect_stall(const StallView& view, const ArgsReady& ready) const;

  const PoolState& state() const { return state_; }
  bool unlimited() const { return unlimited_; }

 private:
  bool unlimited_;
  std::unique_ptr<GrantPolicy> policy_;
  PoolState state_;
};

}  // namespace empa
