#include <doctest.h>

#include <map>

#include "empa/core.hpp"
#include "support.hpp"

using namespace empa;
using empa::testing::events_of;
using empa::testing::pool;
using empa::testing::run_text;

namespace {

std::vector<Cycle> cycles_of(const std::vector<TraceEvent>& events) {
  std::vector<Cycle> out;
  for (const auto& e : events) out.push_back(e.cycle);
  return out;
}

std::vector<TraceEvent> payloads_of(const RunResult& r, const std::string& fragment, const std::string& op) {
  std::vector<TraceEvent> out;
  for (const auto& e : events_of(r, EventKind::RetirePayload)) {
    if (e.fragment == fragment && detail_field(e.detail, "op") == op) out.push_back(e);
  }
  return out;
}

Errc fault_of(const std::string& text) {
  try {
    (void)run_text(text, pool(std::nullopt));
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("run did not fault");
  return Errc::Io;
}

}  // namespace

TEST_CASE("latch_put fills an empty latch and refuses a full one") {
  Link link;
  CHECK(latch_put(link, 5, 2));
  CHECK(link.latch.full());
  CHECK(*link.latch.value == 5);
  CHECK(link.latch.fill_cycle == 2);
  CHECK_FALSE(link.latch.readable(2));
  CHECK(link.latch.readable(3));
  CHECK_FALSE(latch_put(link, 6, 2));
  CHECK(*link.latch.value == 5);
  // Consumed at 3, refilled at 3, readable at 4.
  link.latch.value.reset();
  CHECK(latch_put(link, 7, 3));
  CHECK_FALSE(link.latch.readable(3));
  CHECK(link.latch.readable(4));
}

TEST_CASE("signals are visible from the cycle after raising") {
  Signal s;
  CHECK_FALSE(s.visible(1));
  s.raise(4);
  CHECK_FALSE(s.visible(4));
  CHECK(s.visible(5));
}

TEST_CASE("a loading child's value is readable by the parent one cycle later") {
  const RunResult r = run_text(
      ".data\nX: .word 41\nY: .word 0\n"
      ".frag load kind=call\n    LD r1, [r0]\n    QRET r1\n"
      ".code\n    QRENT p0, load, @X\n    MOV r0, p0\n    ADD r0, r0, 1\n    ST [@Y], r0\n    HALT\n",
      pool(std::nullopt));
  CHECK(r.memory == std::vector<std::int64_t>{41, 42});
  CHECK(cycles_of(payloads_of(r, "load", "LD")) == std::vector<Cycle>{1});
  const auto rets = events_of(r, EventKind::RetireMeta);
  const auto qret = std::find_if(rets.begin(), rets.end(), [](const TraceEvent& e) {
    return detail_field(e.detail, "op") == "QRET";
  });
  REQUIRE(qret != rets.end());
  CHECK(qret->cycle == 1);
  CHECK(cycles_of(payloads_of(r, "root", "MOV")) == std::vector<Cycle>{2});
  const auto consumes = events_of(r, EventKind::Consume);
  REQUIRE(consumes.size() == 1);
  CHECK(detail_int(consumes[0].detail, "fill") == 1);
  CHECK(consumes[0].cycle == 2);
  CHECK(r.cycles == 4);
}

TEST_CASE("reading an empty latch blocks, then executes once it fills") {
  const RunResult r = run_text(
      ".data\nOUT: .word 0\n"
      ".frag slow kind=call\n    LDI r1, 1\n    ADD r1, r1, 1\n    ADD r1, r1, 1\n    QRET r1\n"
      ".code\n    LDI r0, 10\n    QRENT p0, slow\n    ADD r0, r0, p0\n    ST [@OUT], r0\n    HALT\n",
      pool(std::nullopt));
  CHECK(r.memory[0] == 13);
  const auto blocks = events_of(r, EventKind::Block);
  REQUIRE_FALSE(blocks.empty());
  CHECK(blocks.front().cycle == 2);
  CHECK(detail_field(blocks.front().detail, "reason") == "latch-read");
  // Child retires its last ADD and QRET in cycle 3; the parent's ADD runs in 4.
  CHECK(cycles_of(payloads_of(r, "root", "ADD")) == std::vector<Cycle>{4});
  CHECK(r.root_latches[0] == std::nullopt);
}

TEST_CASE("QLOOP 3 around one ADD retires three ADDs in consecutive cycles") {
  const RunResult r = run_text(".code\n    LDI r0, 0\n    QLOOP 3, end\n    ADD r0, r0, 2\nend:\n    HALT\n",
                               pool(std::nullopt));
  CHECK(cycles_of(payloads_of(r, "root", "ADD")) == std::vector<Cycle>{2, 3, 4});
  CHECK(r.cycles == 4);
  CHECK(r.root_registers[0] == 6);
}

TEST_CASE("QLOOP with a zero or negative count skips its body") {
  const RunResult zero = run_text(".code\n    LDI r0, 5\n    QLOOP 0, end\n    ADD r0, r0, 1\nend:\n    HALT\n",
                                  pool(std::nullopt));
  CHECK(zero.root_registers[0] == 5);
  CHECK(zero.cycles == 1);
  const RunResult reg = run_text(
      ".code\n    LDI r1, -2\n    LDI r0, 5\n    QLOOP r1, end\n    ADD r0, r0, 1\nend:\n    HALT\n", pool(std::nullopt));
  CHECK(reg.root_registers[0] == 5);
}

TEST_CASE("nested loops multiply their counts") {
  const RunResult r = run_text(
      ".code\n    LDI r0, 0\n    QLOOP 3, outer\n    QLOOP 4, inner\n    ADD r0, r0, 1\ninner:\n    ADD r0, r0, 100\nouter:\n"
      "    HALT\n",
      pool(std::nullopt));
  CHECK(r.root_registers[0] == 3 * 4 + 3 * 100);
  CHECK(r.cycles == 1 + 3 * 5);
}

TEST_CASE("the stream producer throttles vecsum to two cycles per element") {
  const RunResult r = run(build_kernel({"vecsum", {{"n", 100}}, Model::Empa}), pool(std::nullopt));
  std::vector<Cycle> expected;
  for (Cycle c = 3; c <= 201; c += 2) expected.push_back(c);
  CHECK(cycles_of(events_of(r, EventKind::Consume)) == expected);
  CHECK(r.cycles == 202);
}

TEST_CASE("every kernel respects the latch and payload rules") {
  for (const auto& [name, model] : empa::testing::all_kernel_variants()) {
    for (std::optional<std::size_t> size : {std::optional<std::size_t>{}, std::optional<std::size_t>{64}}) {
      CAPTURE(name);
      KernelSpec spec{name, {}, model};
      if (name == "conv2d") spec.params = {{"width", 8}, {"height", 6}};
      const RunResult r = run(build_kernel(spec), pool(size, model));
      REQUIRE(r.halted_cleanly);
      for (const auto& e : events_of(r, EventKind::Consume)) CHECK(detail_int(e.detail, "fill") < e.cycle);
      std::map<std::pair<Cycle, CoreId>, int> per_core;
      for (const auto& e : events_of(r, EventKind::RetirePayload)) ++per_core[{e.cycle, e.core}];
      for (const auto& [key, count] : per_core) CHECK(count == 1);
      // Puts and consumes alternate on every link: no double read, no overwrite.
      std::map<std::int64_t, std::string> owner;  // child activation -> parent act/link
      std::map<std::string, int> filled;
      for (const auto& e : r.trace->events) {
        if (e.kind == EventKind::Grant) {
          const std::string key = *detail_field(e.detail, "parent_act") + "/" + *detail_field(e.detail, "link");
          owner[*detail_int(e.detail, "act")] = key;
          filled[key] = 0;  // a fresh rent starts with an empty latch
        } else if (e.kind == EventKind::Put && owner.count(*detail_int(e.detail, "act"))) {
          CHECK(filled[owner[*detail_int(e.detail, "act")]]++ == 0);
        } else if (e.kind == EventKind::Consume) {
          CHECK(filled[*detail_field(e.detail, "act") + "/" + *detail_field(e.detail, "link")]-- == 1);
        }
      }
    }
  }
}

TEST_CASE("CMP flags drive the conditional branches") {
  const RunResult r = run_text(
      ".code\n    LDI r0, 3\n    LDI r1, 0\nloop:\n    ADD r1, r1, r0\n    SUB r0, r0, 1\n    CMP r0, 0\n    BNE loop\n"
      "    CMP r1, 6\n    BEQ six\n    LDI r2, 99\n    HALT\nsix:\n    LDI r2, 1\n    CMP r2, 5\n    BLT less\n    LDI r3, 99\n"
      "less:\n    LDI r3, 2\n    JMP done\n    LDI r3, 77\ndone:\n    HALT\n",
      pool(std::nullopt));
  CHECK(r.root_registers[1] == 6);
  CHECK(r.root_registers[2] == 1);
  CHECK(r.root_registers[3] == 2);
}

TEST_CASE("arithmetic wraps around in two's complement") {
  const RunResult r = run_text(
      ".code\n    LDI r0, 9223372036854775807\n    ADD r1, r0, 1\n    MUL r2, r0, 2\n    LDI r3, -9223372036854775808\n"
      "    SUB r4, r3, 1\n    HALT\n",
      pool(std::nullopt));
  CHECK(r.root_registers[1] == std::numeric_limits<std::int64_t>::min());
  CHECK(r.root_registers[2] == -2);
  CHECK(r.root_registers[4] == std::numeric_limits<std::int64_t>::max());
}

TEST_CASE("runtime faults") {
  CHECK(fault_of(".code\n    MOV r0, p1\n    HALT\n") == Errc::RuntimeFault);
  CHECK(fault_of(".code\n    LD r0, [1000]\n    HALT\n") == Errc::RuntimeFault);
  CHECK(fault_of(".data\nX: .word 1\n.code\n    LDI r1, -1\n    ST [r1], r1\n    HALT\n") == Errc::RuntimeFault);

  std::string nest = ".code\n";
  for (int d = 0; d < 9; ++d) nest += "    QLOOP 1, e" + std::to_string(d) + "\n";
  nest += "    LDI r0, 1\n";
  for (int d = 8; d >= 0; --d) nest += "e" + std::to_string(d) + ":\n    LDI r1, 1\n";
  nest += "    HALT\n";
  CHECK(fault_of(nest) == Errc::RuntimeFault);
}

TEST_CASE("eight nested loops are allowed") {
  std::string nest = ".code\n    LDI r0, 0\n";
  for (int d = 0; d < 8; ++d) nest += "    QLOOP 2, e" + std::to_string(d) + "\n";
  nest += "    ADD r0, r0, 1\n";
  for (int d = 7; d >= 0; --d) nest += "e" + std::to_string(d) + ":\n";
  nest += "    HALT\n";
  const RunResult r = run_text(nest, pool(std::nullopt));
  CHECK(r.root_registers[0] == 256);
  CHECK(r.cycles == 257);
}
