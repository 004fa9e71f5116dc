#include <doctest.h>

#include "support.hpp"

using namespace empa;
using empa::testing::pool;

namespace {

std::int64_t vector_sum(std::int64_t n) {
  std::int64_t s = 0;
  for (std::int64_t i = 0; i < n; ++i) s += (7 * i + 3) % 101;
  return s;
}

struct Both {
  ObjectCode empa_object;
  RunResult empa;
  RunResult spa;
};

Both run_both(const std::string& name, std::map<std::string, std::int64_t> params) {
  Both b;
  b.empa_object = build_kernel({name, params, Model::Empa});
  b.empa = run(b.empa_object, pool(std::nullopt));
  b.spa = run(build_kernel({name, params, Model::Spa}), pool(std::nullopt, Model::Spa));
  REQUIRE(b.empa.halted_cleanly);
  REQUIRE(b.spa.halted_cleanly);
  return b;
}

std::int64_t word(const Both& b, const std::string& label, std::int64_t offset = 0) {
  return b.empa.memory.at(static_cast<std::size_t>(*b.empa_object.data_address(label) + offset));
}

Errc error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error");
  return Errc::Io;
}

}  // namespace

TEST_CASE("every kernel variant assembles in its own mode") {
  CHECK(kernel_names() == std::vector<std::string>{"expr2", "vecsum", "vecsum_tree", "conv2d", "irq_demo"});
  for (const auto& [name, model] : empa::testing::all_kernel_variants()) {
    const SourceUnit src = generate({name, {}, model});
    const AssembleResult r = assemble(src, model == Model::Spa ? AsmMode::Spa : AsmMode::Empa);
    CHECK(r.ok());
    CHECK(r.diagnostics.empty());
    CHECK(generate({name, {}, model}).text == src.text);
    if (model == Model::Spa) CHECK_FALSE(r.object->has_empa_metas());
  }
}

TEST_CASE("both variants leave identical memory") {
  const std::vector<std::pair<std::string, std::map<std::string, std::int64_t>>> cases = {
      {"expr2", {}},
      {"expr2", {{"c", -4}, {"d", 9}, {"e", 100}, {"f", -3}}},
      {"vecsum", {{"n", 1}}},
      {"vecsum", {{"n", 37}}},
      {"vecsum", {}},
      {"vecsum_tree", {}},
      {"vecsum_tree", {{"n", 4}, {"fanout", 2}}},
      {"vecsum_tree", {{"n", 50}, {"fanout", 3}}},
      {"vecsum_tree", {{"n", 100}, {"fanout", 4}}},
      {"conv2d", {}},
      {"conv2d", {{"width", 3}, {"height", 3}}},
      {"conv2d", {{"width", 9}, {"height", 4}}},
      {"irq_demo", {{"n", 10}}},
  };
  for (const auto& [name, params] : cases) {
    CAPTURE(name);
    const Both b = run_both(name, params);
    CHECK(b.empa.memory == b.spa.memory);
    CHECK(kernel_outputs({name, params, Model::Empa}, b.empa) == kernel_outputs({name, params, Model::Spa}, b.spa));
    CHECK(b.empa.stats.payload_retired <= b.spa.stats.payload_retired);
  }
}

TEST_CASE("expr2 computes both expressions") {
  const std::map<std::string, std::int64_t> p{{"c", -4}, {"d", 9}, {"e", 100}, {"f", -3}};
  const Both b = run_both("expr2", p);
  const std::vector<std::int64_t> expected{-4 * 9 + 100 * -3, -4 * 9 - 100 * -3};
  CHECK(kernel_outputs({"expr2", p, Model::Empa}, b.empa) == expected);
  CHECK(kernel_outputs({"expr2", p, Model::Spa}, b.spa) == expected);
  CHECK(b.spa.stats.payload_retired == 8);
}

TEST_CASE("vecsum sums the input vector") {
  for (std::int64_t n : {1, 2, 13, 100, 257}) {
    const Both b = run_both("vecsum", {{"n", n}});
    CHECK(word(b, "S") == vector_sum(n));
    for (std::int64_t i = 0; i < n; ++i) CHECK(word(b, "V", i) == input_value(i));
    // Six payloads per element in the baseline, two in the stream loader.
    CHECK(b.empa.stats.payload_per_fragment.at("vload") == 2 * n);
    CHECK(b.spa.stats.payload_retired - 6 * n == run_both("vecsum", {{"n", 1}}).spa.stats.payload_retired - 6);
  }
}

TEST_CASE("vecsum uses exactly one extra core") {
  const Both b = run_both("vecsum", {});
  CHECK(b.empa.stats.distinct_cores_used == 2);
  CHECK(b.empa.stats.max_cores_used == 2);
  CHECK(b.spa.cycles == 605);
  CHECK(b.empa.cycles == 202);
}

TEST_CASE("vecsum_tree agrees with the direct sum for every fan-out") {
  for (std::int64_t fanout : {2, 3, 4}) {
    for (std::int64_t n : {fanout * fanout, std::int64_t{61}, std::int64_t{1024}}) {
      CAPTURE(fanout);
      CAPTURE(n);
      const Both b = run_both("vecsum_tree", {{"n", n}, {"fanout", fanout}});
      CHECK(word(b, "S") == vector_sum(n));
      CHECK(b.empa.stats.distinct_cores_used == static_cast<std::size_t>(1 + fanout + 2 * fanout * fanout));
    }
  }
}

TEST_CASE("conv2d matches a direct stencil evaluation") {
  for (const auto& [w, h] : std::vector<std::pair<std::int64_t, std::int64_t>>{{16, 16}, {3, 3}, {5, 7}, {9, 4}}) {
    CAPTURE(w);
    CAPTURE(h);
    const Both b = run_both("conv2d", {{"width", w}, {"height", h}});
    const std::vector<std::int64_t> oracle = empa::testing::conv2d_oracle(w, h);
    for (std::int64_t i = 0; i < w * h; ++i) {
      CHECK(word(b, "O", i) == oracle[static_cast<std::size_t>(i)]);
      CHECK(word(b, "I", i) == input_value(i));
    }
    for (int i = 0; i < 9; ++i) CHECK(word(b, "K", i) == kLaplacian[i]);
  }
}

TEST_CASE("irq_demo accumulates a triangular number") {
  for (std::int64_t n : {1, 10, 100}) {
    const Both b = run_both("irq_demo", {{"n", n}});
    CHECK(word(b, "ACC") == n * (n - 1) / 2);
    CHECK(word(b, "CNT") == 0);
  }
  const ObjectCode o = build_kernel({"irq_demo", {}, Model::Empa});
  const Fragment* isr = o.find_fragment(kIrqHandler);
  REQUIRE(isr != nullptr);
  CHECK(isr->kind == FragmentKind::Call);
  int payload = 0;
  for (const auto& in : isr->code) payload += is_payload(in.op);
  CHECK(payload == 5);
}

TEST_CASE("parameters are checked") {
  CHECK(default_params("vecsum").at("n") == 100);
  CHECK(resolve_params({"conv2d", {{"width", 8}}, Model::Empa}) ==
        std::map<std::string, std::int64_t>{{"width", 8}, {"height", 16}});
  for (const KernelSpec& bad : std::vector<KernelSpec>{
           {"vecsum", {{"n", 0}}, Model::Empa},
           {"vecsum_tree", {{"fanout", 5}}, Model::Empa},
           {"vecsum_tree", {{"fanout", 1}}, Model::Empa},
           {"vecsum_tree", {{"n", 8}, {"fanout", 3}}, Model::Empa},
           {"conv2d", {{"width", 2}}, Model::Spa},
           {"conv2d", {{"height", 0}}, Model::Spa},
           {"irq_demo", {{"n", -1}}, Model::Spa},
           {"expr2", {{"g", 1}}, Model::Empa},
           {"nosuch", {}, Model::Empa},
       }) {
    CAPTURE(bad.name);
    CHECK(error_of([&] { (void)generate(bad); }) == Errc::BadParams);
  }
}
