#include "empa/supervisor.hpp"

#include <algorithm>

#include "empa/error.hpp"

namespace empa {

std::vector<std::size_t> FifoGrantPolicy::select(const std::deque<RentRequest>& pending, const ArgsReady& ready,
                                                 std::optional<std::size_t> free_cores) const {
  std::vector<std::size_t> chosen;
  for (std::size_t i = 0; i < pending.size(); ++i) {
    if (free_cores && chosen.size() >= *free_cores) break;
    if (!ready(pending[i])) continue;
    chosen.push_back(i);
  }
  return chosen;
}

Supervisor::Supervisor(bool unlimited, std::unique_ptr<GrantPolicy> policy)
    : unlimited_(unlimited), policy_(std::move(policy)) {}

void Supervisor::add_free(CoreId core) { state_.free.insert(core); }

void Supervisor::add_reserved(CoreId core) { state_.reserved_supervisor.insert(core); }

void Supervisor::request_rent(RentRequest request) { state_.pending.push_back(std::move(request)); }

std::vector<Grant> Supervisor::tick_grants(const ArgsReady& ready, const std::function<CoreId()>& mint) {
  std::vector<Grant> grants;
  if (state_.pending.empty()) return grants;
  std::optional<std::size_t> capacity;
  if (!unlimited_) capacity = state_.free.size();
  const std::vector<std::size_t> chosen = policy_->select(state_.pending, ready, capacity);
  for (std::size_t index : chosen) {
    CoreId core = 0;
    if (!state_.free.empty()) {
      core = *state_.free.begin();
      state_.free.erase(state_.free.begin());
    } else if (unlimited_) {
      core = mint();
    } else {
      throw Error(Errc::RuntimeFault, "grant policy selected more requests than free cores");
    }
    grants.push_back({state_.pending[index], core});
  }
  // Erase back to front so earlier indices stay valid.
  for (auto it = chosen.rbegin(); it != chosen.rend(); ++it) {
    state_.pending.erase(state_.pending.begin() + static_cast<std::ptrdiff_t>(*it));
  }
  return grants;
}

void Supervisor::release(CoreId core) {
  if (state_.reserved_supervisor.count(core) != 0) return;
  state_.releasing.push_back(core);
}

void Supervisor::end_cycle() {
  for (CoreId core : state_.releasing) state_.free.insert(core);
  state_.releasing.clear();
}

bool Supervisor::cancel(CoreId requester, std::uint32_t depth, std::uint8_t link) {
  auto it = std::find_if(state_.pending.begin(), state_.pending.end(), [&](const RentRequest& r) {
    return r.requester == requester && r.depth == depth && r.link == link;
  });
  if (it == state_.pending.end()) return false;
  state_.pending.erase(it);
  return true;
}

std::optional<RentRequest> Supervisor::take(std::uint64_t id) {
  auto it = std::find_if(state_.pending.begin(), state_.pending.end(),
                         [&](const RentRequest& r) { return r.id == id; });
  if (it == state_.pending.end()) return std::nullopt;
  RentRequest request = std::move(*it);
  state_.pending.erase(it);
  return request;
}

StallDecision Supervisor::detect_stall(const StallView& view, const ArgsReady& ready) const {
  if (view.retired_any || view.grants > 0 || view.other_progress) return {};
  for (const RentRequest& request : state_.pending) {
    if (request.kind == FragmentKind::Call && ready(request)) {
      return {StallDecision::Kind::InlineFallback, request};
    }
  }
  return {StallDecision::Kind::Deadlock, std::nullopt};
}

}  // namespace empa
