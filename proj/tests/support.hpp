#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "empa/assembler.hpp"
#include "empa/engine.hpp"
#include "empa/error.hpp"
#include "empa/kernels.hpp"

namespace empa::testing {

inline ObjectCode assemble_ok(const std::string& text, AsmMode mode = AsmMode::Empa) {
  const SourceUnit source{text, "<test>"};
  AssembleResult r = assemble(source, mode);
  if (!r.ok()) {
    std::string all;
    for (const auto& d : r.diagnostics) all += format_diagnostic(source, d) + "\n";
    throw std::runtime_error("assembly failed:\n" + all);
  }
  return *r.object;
}

inline MachineConfig pool(std::optional<std::size_t> size, Model model = Model::Empa) {
  MachineConfig c;
  c.pool_size = size;
  c.model = model;
  c.check_invariants = true;
  return c;
}

inline RunResult run_text(const std::string& text, const MachineConfig& config) {
  return run(assemble_ok(text, config.model == Model::Spa ? AsmMode::Spa : AsmMode::Empa), config);
}

inline std::vector<TraceEvent> events_of(const RunResult& r, EventKind kind) {
  std::vector<TraceEvent> out;
  for (const TraceEvent& e : r.trace->events) {
    if (e.kind == kind) out.push_back(e);
  }
  return out;
}

// Code labels replaced by the instruction index they name, so objects can be
// compared independently of label spelling.
inline std::vector<std::vector<std::string>> label_free_view(const ObjectCode& o) {
  std::vector<std::vector<std::string>> out;
  for (const Fragment& f : o.fragments) {
    std::vector<std::string> lines{f.name + ":" + std::string(to_string(f.kind))};
    for (const Instruction& in : f.code) {
      std::string s(mnemonic(in.op));
      for (std::size_t k = 0; k < in.operands.size(); ++k) {
        const auto* label = std::get_if<Label>(&in.operands[k]);
        if (label && (opcode_info(in.op).kinds[k] & kCodeLabel)) {
          s += " #" + std::to_string(f.labels.at(label->name));
        } else {
          s += " " + format_operand(in.operands[k]);
        }
      }
      lines.push_back(s);
    }
    out.push_back(lines);
  }
  return out;
}

inline std::vector<std::pair<std::string, Model>> all_kernel_variants() {
  std::vector<std::pair<std::string, Model>> out;
  for (const std::string& name : kernel_names()) {
    out.emplace_back(name, Model::Spa);
    out.emplace_back(name, Model::Empa);
  }
  return out;
}

// Random call-only programs: arithmetic trees of depth <= 4 and fan-out <= 4
// whose leaves load data words. Every internal node is its own call fragment
// that rents its children and folds their latches with ADD/SUB/MUL; some nodes
// pre-combine their first two children through a shared `add2` fragment fed by
// latch arguments.
struct TreeNode {
  bool leaf = true;
  int address = 0;            // leaf: data word
  std::vector<int> children;  // internal
  std::vector<Opcode> ops;    // ops[i] folds child i+1 (or i+2 with add2)
  bool add2 = false;
};

struct RandomProgram {
  std::string source;
  std::vector<std::int64_t> expected_memory;  // evaluated outside the simulator
  int fragments = 0;
};

class TreeProgramGenerator {
 public:
  explicit TreeProgramGenerator(std::uint64_t seed) : rng_(seed) {}

  RandomProgram next() {
    nodes_.clear();
    data_.clear();
    const int words = uniform(4, 16);
    for (int i = 0; i < words; ++i) data_.push_back(uniform(-50, 50));
    const int trees = uniform(1, 3);
    std::vector<int> roots;
    for (int t = 0; t < trees; ++t) roots.push_back(grow(uniform(1, 4)));

    std::ostringstream os;
    os << ".data\nD:";
    for (std::size_t i = 0; i < data_.size(); ++i) os << (i ? ", " : " .word ") << data_[i];
    os << "\n";
    for (int t = 0; t < trees; ++t) os << "OUT" << t << ": .word 0\n";
    os << "\n.frag leaf kind=call\n    LD r2, [r0]\n    QRET r2\n\n"
       << ".frag add2 kind=call\n    ADD r2, r0, r1\n    QRET r2\n\n";
    int count = 2;
    for (std::size_t id = 0; id < nodes_.size(); ++id) {
      const TreeNode& n = nodes_[id];
      if (n.leaf) continue;
      ++count;
      os << ".frag n" << id << " kind=call\n";
      for (std::size_t c = 0; c < n.children.size(); ++c) os << "    " << rent_line(static_cast<int>(c), n.children[c]);
      std::size_t next = 1;
      if (n.add2) {
        const int link = static_cast<int>(n.children.size());
        os << "    QRENT p" << link << ", add2, p0, p1\n";
        os << "    MOV r2, p" << link << "\n";
        next = 2;
      } else {
        os << "    MOV r2, p0\n";
      }
      for (std::size_t c = next, k = 0; c < n.children.size(); ++c, ++k) {
        os << "    " << mnemonic(n.ops[k]) << " r2, r2, p" << c << "\n";
      }
      os << "    QRET r2\n\n";
    }
    os << ".code\n";
    for (int t = 0; t < trees; ++t) os << "    " << rent_line(t, roots[static_cast<std::size_t>(t)]);
    for (int t = 0; t < trees; ++t) os << "    MOV r2, p" << t << "\n    ST [@OUT" << t << "], r2\n";
    os << "    HALT\n";

    RandomProgram program;
    program.source = os.str();
    program.fragments = count;
    program.expected_memory = data_;
    for (int root : roots) program.expected_memory.push_back(eval(root));
    return program;
  }

 private:
  int uniform(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

  int grow(int depth) {
    TreeNode node;
    if (depth <= 1 || uniform(0, 3) == 0) {
      node.address = uniform(0, static_cast<int>(data_.size()) - 1);
      nodes_.push_back(node);
      return static_cast<int>(nodes_.size()) - 1;
    }
    const int fanout = uniform(1, 4);
    node.leaf = false;
    node.add2 = fanout >= 2 && fanout <= 3 && uniform(0, 2) == 0;
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    std::vector<int> children;
    for (int c = 0; c < fanout; ++c) children.push_back(grow(depth - 1));
    static constexpr Opcode kOps[3] = {Opcode::ADD, Opcode::SUB, Opcode::MUL};
    std::vector<Opcode> ops;
    for (int c = node.add2 ? 2 : 1; c < fanout; ++c) ops.push_back(kOps[uniform(0, 2)]);
    nodes_[static_cast<std::size_t>(id)].children = children;
    nodes_[static_cast<std::size_t>(id)].ops = ops;
    return id;
  }

  std::string rent_line(int link, int child) const {
    const TreeNode& n = nodes_[static_cast<std::size_t>(child)];
    if (n.leaf) return "QRENT p" + std::to_string(link) + ", leaf, " + std::to_string(n.address) + "\n";
    return "QRENT p" + std::to_string(link) + ", n" + std::to_string(child) + "\n";
  }

  // Two's-complement wrap-around, independent of the simulator's ALU.
  static std::int64_t apply(Opcode op, std::int64_t a, std::int64_t b) {
    const auto ua = static_cast<std::uint64_t>(a);
    const auto ub = static_cast<std::uint64_t>(b);
    switch (op) {
      case Opcode::ADD: return static_cast<std::int64_t>(ua + ub);
      case Opcode::SUB: return static_cast<std::int64_t>(ua - ub);
      default: return static_cast<std::int64_t>(ua * ub);
    }
  }

  std::int64_t eval(int id) const {
    const TreeNode& n = nodes_[static_cast<std::size_t>(id)];
    if (n.leaf) return data_[static_cast<std::size_t>(n.address)];
    std::vector<std::int64_t> v;
    for (int c : n.children) v.push_back(eval(c));
    std::size_t next = 1;
    std::int64_t acc = v[0];
    if (n.add2) {
      acc = apply(Opcode::ADD, v[0], v[1]);
      next = 2;
    }
    for (std::size_t c = next, k = 0; c < v.size(); ++c, ++k) acc = apply(n.ops[k], acc, v[c]);
    return acc;
  }

  std::mt19937_64 rng_;
  std::vector<TreeNode> nodes_;
  std::vector<std::int64_t> data_;
};

// Direct evaluation of the interior Laplacian of the kernels' input image.
inline std::vector<std::int64_t> conv2d_oracle(std::int64_t w, std::int64_t h) {
  std::vector<std::int64_t> image;
  for (std::int64_t i = 0; i < w * h; ++i) image.push_back((7 * i + 3) % 101);
  const std::int64_t k[3][3] = {{-1, -1, -1}, {-1, 8, -1}, {-1, -1, -1}};
  std::vector<std::int64_t> out(static_cast<std::size_t>(w * h), 0);
  for (std::int64_t y = 1; y + 1 < h; ++y) {
    for (std::int64_t x = 1; x + 1 < w; ++x) {
      std::int64_t s = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) s += k[dy + 1][dx + 1] * image[static_cast<std::size_t>((y + dy) * w + x + dx)];
      }
      out[static_cast<std::size_t>(y * w + x)] = s;
    }
  }
  return out;
}

}  // namespace empa::testing
