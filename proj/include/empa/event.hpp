#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace empa {

using CoreId = std::uint32_t;
using Cycle = std::int64_t;

enum class EventKind : std::uint8_t {
  Grant,
  StartFragment,
  RetirePayload,
  RetireMeta,
  Block,
  Unblock,
  Put,
  Consume,
  Signal,
  Return,
  Release,
  InlineSplice,
  InterruptFire,
  InterruptServe,
};

std::string_view to_string(EventKind kind);
std::optional<EventKind> parse_event_kind(std::string_view text);

// `detail` carries space-separated key=value pairs (act=, parent_act=, link=, ...).
struct TraceEvent {
  Cycle cycle = 0;
  CoreId core = 0;
  EventKind kind = EventKind::RetireMeta;
  std::string fragment;
  std::string detail;

  friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

// Value of `key=` in an event detail string.
std::optional<std::string> detail_field(std::string_view detail, std::string_view key);
std::optional<std::int64_t> detail_int(std::string_view detail, std::string_view key);

}  // namespace empa
