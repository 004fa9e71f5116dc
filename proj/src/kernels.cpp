#include "empa/kernels.hpp"

#include <algorithm>
#include <sstream>

#include "empa/error.hpp"

namespace empa {

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(Errc::BadParams, what); }

void emit_words(std::ostringstream& os, const std::string& label, const std::vector<std::int64_t>& words) {
  constexpr std::size_t kPerLine = 16;
  os << label << ":";
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i > 0 && i % kPerLine == 0) os << "\n   ";
    os << ((i % kPerLine) ? ", " : " .word ") << words[i];
  }
  os << "\n";
}

std::vector<std::int64_t> inputs(std::int64_t begin, std::int64_t count) {
  std::vector<std::int64_t> v;
  for (std::int64_t i = begin; i < begin + count; ++i) v.push_back(input_value(i));
  return v;
}

// Stream fragment: r0 = address, r1 = count; puts each element in turn.
void emit_loader(std::ostringstream& os) {
  os << ".frag vload kind=stream\n"
        "    QLOOP r1, done\n"
        "    LD r2, [r0]\n"
        "    ADD r0, r0, 1\n"
        "    QPUT r2\n"
        "done:\n"
        "    QEND\n\n";
}

// Six payload instructions per element: address, load, accumulate, index,
// compare, branch.
void emit_spa_sum(std::ostringstream& os, const std::string& base, std::int64_t n) {
  os << ".code\n"
        "    LDI r0, @" << base << "\n"
        "    LDI r1, 0\n"
        "    LDI r2, 0\n"
        "    LDI r3, " << n << "\n"
        "loop:\n"
        "    ADD r4, r0, r1\n"
        "    LD r5, [r4]\n"
        "    ADD r2, r2, r5\n"
        "    ADD r1, r1, 1\n"
        "    CMP r1, r3\n"
        "    BNE loop\n"
        "    ST [@S], r2\n"
        "    HALT\n";
}

std::string expr2(const std::map<std::string, std::int64_t>& p, Model variant) {
  std::ostringstream os;
  os << "; A = (C*D) + (E*F), B = (C*D) - (E*F)\n.data\n";
  os << "C: .word " << p.at("c") << "\nD: .word " << p.at("d") << "\nE: .word " << p.at("e")
     << "\nF: .word " << p.at("f") << "\n\n";
  if (variant == Model::Spa) {
    os << ".code\n"
          "    LD r0, [@C]\n"
          "    LD r1, [@D]\n"
          "    LD r2, [@E]\n"
          "    LD r3, [@F]\n"
          "    MUL r0, r0, r1\n"
          "    MUL r2, r2, r3\n"
          "    ADD r4, r0, r2\n"
          "    SUB r5, r0, r2\n"
          "    HALT\n";
    return os.str();
  }
  os << ".frag lload kind=call\n"
        "    LD r2, [r0]\n"
        "    QRET r2\n\n"
        ".frag hmul kind=call\n"
        "    QRENT p0, lload, r0\n"
        "    QRENT p1, lload, r1\n"
        "    MUL r2, p0, p1\n"
        "    QRET r2\n\n"
        ".frag fadd kind=call\n"
        "    ADD r2, r0, r1\n"
        "    QRET r2\n\n"
        ".frag fsub kind=call\n"
        "    SUB r2, r0, r1\n"
        "    QRET r2\n\n"
        ".code\n"
        "    QRENT p0, hmul, @C, @D\n"
        "    QRENT p1, hmul, @E, @F\n"
        "    QRENT p2, fadd, p0, p1\n"
        "    QRENT p3, fsub, p0, p1\n"
        "    HALT\n";
  return os.str();
}

std::string vecsum(const std::map<std::string, std::int64_t>& p, Model variant) {
  const std::int64_t n = p.at("n");
  std::ostringstream os;
  os << "; S = sum of V[0.." << n << ")\n.data\n";
  emit_words(os, "V", inputs(0, n));
  os << "S: .word 0\n\n";
  if (variant == Model::Spa) {
    emit_spa_sum(os, "V", n);
    return os.str();
  }
  emit_loader(os);
  os << ".code\n"
        "    QRENT p0, vload, @V, " << n << "\n"
        "    LDI r3, 0\n"
        "    QLOOP " << n << ", done\n"
        "    ADD r3, r3, p0\n"
        "done:\n"
        "    QWSIG p0\n"
        "    ST [@S], r3\n"
        "    HALT\n";
  return os.str();
}

std::string vecsum_tree(const std::map<std::string, std::int64_t>& p, Model variant) {
  const std::int64_t n = p.at("n");
  const std::int64_t fanout = p.at("fanout");
  const std::int64_t chunks = fanout * fanout;
  std::vector<std::int64_t> sizes(static_cast<std::size_t>(chunks), n / chunks);
  for (std::int64_t i = 0; i < n % chunks; ++i) ++sizes[static_cast<std::size_t>(i)];

  std::ostringstream os;
  os << "; S = sum of V_0 .. V_" << chunks - 1 << " (" << n << " words, fan-out " << fanout << ")\n.data\n";
  std::int64_t at = 0;
  for (std::int64_t c = 0; c < chunks; ++c) {
    emit_words(os, "V_" + std::to_string(c), inputs(at, sizes[static_cast<std::size_t>(c)]));
    at += sizes[static_cast<std::size_t>(c)];
  }
  os << "S: .word 0\n\n";
  if (variant == Model::Spa) {
    emit_spa_sum(os, "V_0", n);
    return os.str();
  }
  emit_loader(os);
  os << ".frag csum kind=call\n"
        "    QRENT p0, vload, r0, r1\n"
        "    LDI r2, 0\n"
        "    QLOOP r1, done\n"
        "    ADD r2, r2, p0\n"
        "done:\n"
        "    QWSIG p0\n"
        "    QRET r2\n\n";
  auto combine = [&](std::ostringstream& out) {
    out << "    ADD r2, p0, p1\n";
    for (std::int64_t k = 2; k < fanout; ++k) out << "    ADD r2, r2, p" << k << "\n";
  };
  for (std::int64_t j = 0; j < fanout; ++j) {
    os << ".frag comb_" << j << " kind=call\n";
    for (std::int64_t k = 0; k < fanout; ++k) {
      const std::int64_t c = j * fanout + k;
      os << "    QRENT p" << k << ", csum, @V_" << c << ", " << sizes[static_cast<std::size_t>(c)] << "\n";
    }
    combine(os);
    os << "    QRET r2\n\n";
  }
  os << ".code\n";
  for (std::int64_t j = 0; j < fanout; ++j) os << "    QRENT p" << j << ", comb_" << j << "\n";
  combine(os);
  os << "    ST [@S], r2\n"
        "    HALT\n";
  return os.str();
}

std::string conv2d(const std::map<std::string, std::int64_t>& p, Model variant) {
  const std::int64_t w = p.at("width");
  const std::int64_t h = p.at("height");
  const std::int64_t image = w * h;
  const std::int64_t addr_i = 0;
  const std::int64_t addr_k = image;
  const std::int64_t addr_o = image + 9;
  const std::int64_t delta = addr_o - addr_i + w + 1;  // window base -> output pixel

  std::ostringstream os;
  os << "; O = 3x3 Laplacian of the " << w << "x" << h << " image I (interior pixels)\n.data\n";
  emit_words(os, "I", inputs(0, image));
  emit_words(os, "K", std::vector<std::int64_t>(std::begin(kLaplacian), std::end(kLaplacian)));
  emit_words(os, "O", std::vector<std::int64_t>(static_cast<std::size_t>(image), 0));
  os << "\n";

  if (variant == Model::Spa) {
    // r0 window base, r1 row end, r2 weight, r3 kernel-row end, r4 sum,
    // r5 pixel pointer, r6 weight pointer, r7 scratch
    os << ".code\n"
          "    LDI r0, @I\n"
          "rows:\n"
          "    ADD r1, r0, " << w - 2 << "\n"
          "pixels:\n"
          "    LDI r4, 0\n"
          "    MOV r5, r0\n"
          "    LDI r6, @K\n"
          "krows:\n"
          "    ADD r3, r5, 3\n"
          "kcols:\n"
          "    LD r7, [r5]\n"
          "    LD r2, [r6]\n"
          "    MUL r7, r7, r2\n"
          "    ADD r4, r4, r7\n"
          "    ADD r5, r5, 1\n"
          "    ADD r6, r6, 1\n"
          "    CMP r5, r3\n"
          "    BNE kcols\n"
          "    ADD r5, r5, " << w - 3 << "\n"
          "    CMP r6, " << addr_k + 9 << "\n"
          "    BNE krows\n"
          "    ADD r7, r0, " << delta << "\n"
          "    ST [r7], r4\n"
          "    ADD r0, r0, 1\n"
          "    CMP r0, r1\n"
          "    BNE pixels\n"
          "    ADD r0, r0, 2\n"
          "    CMP r0, " << addr_i + (h - 2) * w << "\n"
          "    BNE rows\n"
          "    HALT\n";
    return os.str();
  }

  os << ".frag win kind=stream\n"
        "    QLOOP 3, wrows\n"
        "    QLOOP 3, wcols\n"
        "    LD r2, [r0]\n"
        "    ADD r0, r0, 1\n"
        "    QPUT r2\n"
        "wcols:\n"
        "    ADD r0, r0, " << w - 3 << "\n"
        "wrows:\n"
        "    QEND\n\n";
  os << ".frag pixel kind=call\n"
        "    QRENT p0, win, r0\n"
        "    ADD r4, r0, " << delta << "\n"
        "    MUL r2, p0, " << kLaplacian[0] << "\n";
  for (int k = 1; k < 9; ++k) {
    os << "    MUL r3, p0, " << kLaplacian[k] << "\n"
          "    ADD r2, r2, r3\n";
  }
  os << "    ST [r4], r2\n"
        "    QWSIG p0\n"
        "    QRET r2\n\n";
  os << ".code\n"
        "    LDI r0, @I\n"
        "    QLOOP " << h - 2 << ", rows\n";
  for (std::int64_t x = 0; x < w - 2; ++x) {
    const std::int64_t link = x % kNumLinks;
    os << "    QWSIG p" << link << "\n"
          "    QRENT p" << link << ", pixel, r0\n"
          "    ADD r0, r0, " << (x + 1 < w - 2 ? 1 : 3) << "\n";
  }
  os << "rows:\n";
  for (int link = 0; link < kNumLinks; ++link) os << "    QWSIG p" << link << "\n";
  os << "    HALT\n";
  return os.str();
}

std::string irq_demo(const std::map<std::string, std::int64_t>& p, Model variant) {
  const std::int64_t n = p.at("n");
  std::ostringstream os;
  os << "; ACC = 0 + 1 + ... + " << n - 1 << "; the handler counts interrupts in CNT\n"
        ".data\n"
        "ACC: .word 0\n"
        "CNT: .word 0\n"
        "FLAG: .word 0\n\n"
        ".frag isr kind=call\n"
        "    LD r1, [@CNT]\n"
        "    ADD r1, r1, 1\n"
        "    ST [@CNT], r1\n"
        "    LDI r2, 77\n"
        "    ST [@FLAG], r2\n"
        "    QRET r1\n\n"
        ".code\n"
        "    LDI r0, 0\n"
        "    LDI r1, 0\n";
  if (variant == Model::Spa) {
    os << "loop:\n"
          "    ADD r1, r1, r0\n"
          "    ADD r0, r0, 1\n"
          "    CMP r0, " << n << "\n"
          "    BNE loop\n";
  } else {
    os << "    QLOOP " << n << ", done\n"
          "    ADD r1, r1, r0\n"
          "    ADD r0, r0, 1\n"
          "done:\n";
  }
  os << "    ST [@ACC], r1\n"
        "    HALT\n";
  return os.str();
}

}  // namespace

const std::vector<std::string>& kernel_names() {
  static const std::vector<std::string> names{"expr2", "vecsum", "vecsum_tree", "conv2d", "irq_demo"};
  return names;
}

std::map<std::string, std::int64_t> default_params(const std::string& kernel) {
  if (kernel == "expr2") return {{"c", 3}, {"d", 5}, {"e", 7}, {"f", 11}};
  if (kernel == "vecsum") return {{"n", 100}};
  if (kernel == "vecsum_tree") return {{"n", 1024}, {"fanout", 4}};
  if (kernel == "conv2d") return {{"width", 16}, {"height", 16}};
  if (kernel == "irq_demo") return {{"n", 100}};
  bad("unknown kernel '" + kernel + "'");
}

std::map<std::string, std::int64_t> resolve_params(const KernelSpec& spec) {
  std::map<std::string, std::int64_t> params = default_params(spec.name);
  for (const auto& [key, value] : spec.params) {
    if (params.count(key) == 0) bad("kernel '" + spec.name + "' has no parameter '" + key + "'");
    params[key] = value;
  }
  if (params.count("n") && params["n"] < 1) bad("n must be >= 1");
  if (spec.name == "vecsum_tree") {
    const std::int64_t f = params["fanout"];
    if (f < 2 || f > 4) bad("fanout must be 2, 3 or 4");
    if (params["n"] < f * f) bad("n must be at least fanout^2 = " + std::to_string(f * f));
  }
  if (spec.name == "conv2d" && (params["width"] < 3 || params["height"] < 3)) {
    bad("width and height must be >= 3");
  }
  if (spec.name == "irq_demo" && params["n"] > 1'000'000) bad("n must be <= 1000000");
  return params;
}

SourceUnit generate(const KernelSpec& spec) {
  const auto params = resolve_params(spec);
  std::string text;
  if (spec.name == "expr2") text = expr2(params, spec.variant);
  if (spec.name == "vecsum") text = vecsum(params, spec.variant);
  if (spec.name == "vecsum_tree") text = vecsum_tree(params, spec.variant);
  if (spec.name == "conv2d") text = conv2d(params, spec.variant);
  if (spec.name == "irq_demo") text = irq_demo(params, spec.variant);
  return {text, spec.name + "_" + std::string(to_string(spec.variant)) + ".emps"};
}

ObjectCode build_kernel(const KernelSpec& spec) {
  const SourceUnit source = generate(spec);
  AssembleResult assembled = assemble(source, spec.variant == Model::Spa ? AsmMode::Spa : AsmMode::Empa);
  if (!assembled.ok()) {
    std::string text;
    for (const AsmDiagnostic& d : assembled.diagnostics) text += "\n" + format_diagnostic(source, d);
    throw Error(Errc::RuntimeFault, "generated kernel does not assemble:" + text);
  }
  return std::move(*assembled.object);
}

std::vector<std::int64_t> kernel_outputs(const KernelSpec& spec, const RunResult& result) {
  if (spec.name != "expr2") return result.memory;
  if (spec.variant == Model::Spa) return {result.root_registers[4], result.root_registers[5]};
  return {result.root_latches[2].value_or(0), result.root_latches[3].value_or(0)};
}

}  // namespace empa
