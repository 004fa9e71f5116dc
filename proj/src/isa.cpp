#include "empa/isa.hpp"

#include <algorithm>
#include <array>
#include <set>
#include <sstream>

#include "empa/error.hpp"

namespace empa {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::InvalidObject: return "INVALID_OBJECT";
    case Errc::Malformed: return "MALFORMED";
    case Errc::UnsupportedVersion: return "UNSUPPORTED_VERSION";
    case Errc::RuntimeFault: return "RUNTIME_FAULT";
    case Errc::LinkBusy: return "LINK_BUSY";
    case Errc::FaultOrphan: return "FAULT_ORPHAN";
    case Errc::ModelMismatch: return "MODEL_MISMATCH";
    case Errc::NoReservedCore: return "NO_RESERVED_CORE";
    case Errc::InvalidConfig: return "INVALID_CONFIG";
    case Errc::IncompleteTrace: return "INCOMPLETE_TRACE";
    case Errc::NotClean: return "NOT_CLEAN";
    case Errc::Domain: return "DOMAIN";
    case Errc::Underdetermined: return "UNDERDETERMINED";
    case Errc::Io: return "IO";
    case Errc::Parse: return "PARSE";
    case Errc::HeaderMismatch: return "HEADER_MISMATCH";
    case Errc::BadParams: return "BAD_PARAMS";
  }
  return "UNKNOWN";
}

namespace {

constexpr std::uint8_t kImmLike = kImm | kDataLabel;

constexpr std::array<OpcodeInfo, kNumOpcodes> kOpcodeTable{{
    {Opcode::LDI, 2, 2, {kReg, kImmLike, 0, 0}},
    {Opcode::LD, 2, 2, {kReg, kReg | kImmLike, 0, 0}},
    {Opcode::ST, 2, 2, {kReg | kImmLike, kReg, 0, 0}},
    {Opcode::MOV, 2, 2, {kReg, kReg | kLatch, 0, 0}},
    {Opcode::ADD, 3, 3, {kReg, kReg | kLatch, kReg | kLatch | kImmLike, 0}},
    {Opcode::SUB, 3, 3, {kReg, kReg | kLatch, kReg | kLatch | kImmLike, 0}},
    {Opcode::MUL, 3, 3, {kReg, kReg | kLatch, kReg | kLatch | kImmLike, 0}},
    {Opcode::CMP, 2, 2, {kReg | kLatch, kReg | kLatch | kImmLike, 0, 0}},
    {Opcode::BEQ, 1, 1, {kCodeLabel, 0, 0, 0}},
    {Opcode::BNE, 1, 1, {kCodeLabel, 0, 0, 0}},
    {Opcode::BLT, 1, 1, {kCodeLabel, 0, 0, 0}},
    {Opcode::JMP, 1, 1, {kCodeLabel, 0, 0, 0}},
    {Opcode::QRENT, 2, 4, {kLatch, kFragment, kReg | kLatch | kImmLike, kReg | kLatch | kImmLike}},
    {Opcode::QRET, 1, 1, {kReg, 0, 0, 0}},
    {Opcode::QPUT, 1, 1, {kReg, 0, 0, 0}},
    {Opcode::QEND, 0, 0, {0, 0, 0, 0}},
    {Opcode::QKILL, 1, 1, {kLatch, 0, 0, 0}},
    {Opcode::QLOOP, 2, 2, {kReg | kImm, kCodeLabel, 0, 0}},
    {Opcode::QSIG, 1, 1, {kLatch, 0, 0, 0}},
    {Opcode::QWSIG, 1, 1, {kLatch, 0, 0, 0}},
    {Opcode::HALT, 0, 0, {0, 0, 0, 0}},
}};

constexpr std::array<std::string_view, kNumOpcodes> kMnemonics{
    "LDI", "LD",  "ST",   "MOV",  "ADD",   "SUB",  "MUL",
    "CMP", "BEQ", "BNE",  "BLT",  "JMP",   "QRENT", "QRET",
    "QPUT", "QEND", "QKILL", "QLOOP", "QSIG", "QWSIG", "HALT"};

bool is_branch(Opcode op) {
  return op == Opcode::BEQ || op == Opcode::BNE || op == Opcode::BLT || op == Opcode::JMP;
}

bool is_terminator(Opcode op) {
  return op == Opcode::HALT || op == Opcode::QRET || op == Opcode::QEND;
}

}  // namespace

std::string_view mnemonic(Opcode op) { return kMnemonics[static_cast<std::size_t>(op)]; }

std::optional<Opcode> parse_opcode(std::string_view text) {
  for (std::size_t i = 0; i < kMnemonics.size(); ++i) {
    if (kMnemonics[i] == text) return static_cast<Opcode>(i);
  }
  return std::nullopt;
}

bool is_meta(Opcode op) { return op >= Opcode::QRENT; }

int cycle_cost(Opcode op) { return is_meta(op) ? 0 : 1; }

const OpcodeInfo& opcode_info(Opcode op) { return kOpcodeTable[static_cast<std::size_t>(op)]; }

std::string_view to_string(FragmentKind kind) {
  switch (kind) {
    case FragmentKind::Root: return "root";
    case FragmentKind::Call: return "call";
    case FragmentKind::Stream: return "stream";
  }
  return "?";
}

std::optional<FragmentKind> parse_fragment_kind(std::string_view text) {
  if (text == "root") return FragmentKind::Root;
  if (text == "call") return FragmentKind::Call;
  if (text == "stream") return FragmentKind::Stream;
  return std::nullopt;
}

std::string_view to_string(Violation reason) {
  switch (reason) {
    case Violation::NoRoot: return "NO_ROOT";
    case Violation::MultipleRoots: return "MULTIPLE_ROOTS";
    case Violation::BadEntry: return "BAD_ENTRY";
    case Violation::DuplicateFragment: return "DUP_FRAGMENT";
    case Violation::DuplicateDataLabel: return "DUP_DATA_LABEL";
    case Violation::Arity: return "ARITY";
    case Violation::OperandKind: return "OPERAND_KIND";
    case Violation::RegisterRange: return "REGISTER_RANGE";
    case Violation::LatchRange: return "LATCH_RANGE";
    case Violation::UndefinedCodeLabel: return "UNDEF_CODE_LABEL";
    case Violation::LabelRange: return "LABEL_RANGE";
    case Violation::UndefinedFragment: return "UNDEF_FRAGMENT";
    case Violation::RentsRoot: return "RENTS_ROOT";
    case Violation::UndefinedDataLabel: return "UNDEF_DATA_LABEL";
    case Violation::MetaInWrongKind: return "META_IN_WRONG_KIND";
    case Violation::MissingTerminator: return "MISSING_TERMINATOR";
  }
  return "?";
}

std::string format_operand(const Operand& operand) {
  struct Visitor {
    std::string operator()(const Register& r) const { return "r" + std::to_string(r.index); }
    std::string operator()(const LatchRef& p) const { return "p" + std::to_string(p.link); }
    std::string operator()(std::int64_t v) const { return std::to_string(v); }
    std::string operator()(const Label& l) const { return "@" + l.name; }
  };
  return std::visit(Visitor{}, operand);
}

std::string format_issue(const ValidationIssue& issue) {
  std::ostringstream os;
  os << issue.fragment;
  if (issue.index) os << "[" << *issue.index << "]";
  os << ": " << to_string(issue.reason);
  if (!issue.detail.empty()) os << " (" << issue.detail << ")";
  return os.str();
}

const Fragment* ObjectCode::find_fragment(std::string_view name) const {
  for (const auto& f : fragments) {
    if (f.name == name) return &f;
  }
  return nullptr;
}

std::optional<std::int64_t> ObjectCode::data_address(std::string_view label) const {
  std::int64_t address = 0;
  for (const auto& block : data) {
    if (block.label == label) return address;
    address += static_cast<std::int64_t>(block.words.size());
  }
  return std::nullopt;
}

std::vector<std::int64_t> ObjectCode::initial_memory() const {
  std::vector<std::int64_t> memory;
  for (const auto& block : data) memory.insert(memory.end(), block.words.begin(), block.words.end());
  return memory;
}

bool ObjectCode::has_empa_metas() const {
  for (const auto& f : fragments) {
    for (const auto& in : f.code) {
      if (is_meta(in.op) && in.op != Opcode::HALT && in.op != Opcode::QRET) return true;
    }
  }
  return false;
}

namespace {

class Validator {
 public:
  explicit Validator(const ObjectCode& object) : object_(object) {}

  ValidationReport run() {
    check_program();
    for (const auto& f : object_.fragments) check_fragment(f);
    return std::move(report_);
  }

 private:
  void add(const std::string& frag, std::optional<std::size_t> index, Violation reason,
           std::string detail = {}) {
    report_.push_back({frag, index, reason, std::move(detail)});
  }

  void check_program() {
    std::set<std::string> names;
    int roots = 0;
    for (const auto& f : object_.fragments) {
      if (!names.insert(f.name).second) add(f.name, std::nullopt, Violation::DuplicateFragment);
      if (f.kind == FragmentKind::Root) ++roots;
    }
    if (roots == 0) add("", std::nullopt, Violation::NoRoot);
    if (roots > 1) add("", std::nullopt, Violation::MultipleRoots);
    const Fragment* entry = object_.find_fragment(object_.entry);
    if (entry == nullptr || entry->kind != FragmentKind::Root) {
      add(object_.entry, std::nullopt, Violation::BadEntry);
    }
    std::set<std::string> labels;
    for (const auto& block : object_.data) {
      if (!labels.insert(block.label).second) {
        add("", std::nullopt, Violation::DuplicateDataLabel, block.label);
      }
    }
  }

  std::uint8_t kind_of(const Operand& operand, std::uint8_t allowed) const {
    if (std::holds_alternative<Register>(operand)) return kReg;
    if (std::holds_alternative<LatchRef>(operand)) return kLatch;
    if (std::holds_alternative<std::int64_t>(operand)) return kImm;
    // A label takes whichever symbolic role the position allows.
    if (allowed & kCodeLabel) return kCodeLabel;
    if (allowed & kFragment) return kFragment;
    return kDataLabel;
  }

  void check_operand(const Fragment& f, std::size_t i, const Operand& operand, std::uint8_t allowed) {
    const std::uint8_t kind = kind_of(operand, allowed);
    if ((kind & allowed) == 0) {
      add(f.name, i, Violation::OperandKind, format_operand(operand));
      return;
    }
    if (const auto* r = std::get_if<Register>(&operand); r && r->index >= kNumRegisters) {
      add(f.name, i, Violation::RegisterRange, format_operand(operand));
    }
    if (const auto* p = std::get_if<LatchRef>(&operand); p && p->link >= kNumLinks) {
      add(f.name, i, Violation::LatchRange, format_operand(operand));
    }
    if (const auto* l = std::get_if<Label>(&operand)) {
      if (kind == kCodeLabel) {
        auto it = f.labels.find(l->name);
        if (it == f.labels.end()) add(f.name, i, Violation::UndefinedCodeLabel, l->name);
      } else if (kind == kFragment) {
        const Fragment* target = object_.find_fragment(l->name);
        if (target == nullptr) {
          add(f.name, i, Violation::UndefinedFragment, l->name);
        } else if (target->kind == FragmentKind::Root) {
          add(f.name, i, Violation::RentsRoot, l->name);
        }
      } else if (!object_.data_address(l->name)) {
        add(f.name, i, Violation::UndefinedDataLabel, l->name);
      }
    }
  }

  bool kind_allows(FragmentKind kind, Opcode op) const {
    switch (op) {
      case Opcode::HALT: return kind == FragmentKind::Root;
      case Opcode::QRET: return kind == FragmentKind::Call;
      case Opcode::QPUT:
      case Opcode::QEND: return kind == FragmentKind::Stream;
      default: return true;
    }
  }

  void check_fragment(const Fragment& f) {
    for (const auto& [name, index] : f.labels) {
      if (index > f.code.size()) add(f.name, std::nullopt, Violation::LabelRange, name);
    }
    bool operands_ok = true;
    for (std::size_t i = 0; i < f.code.size(); ++i) {
      const Instruction& in = f.code[i];
      const OpcodeInfo& info = opcode_info(in.op);
      const std::size_t before = report_.size();
      if (in.operands.size() < info.min_arity || in.operands.size() > info.max_arity) {
        add(f.name, i, Violation::Arity, std::string(mnemonic(in.op)));
      } else {
        for (std::size_t k = 0; k < in.operands.size(); ++k) {
          check_operand(f, i, in.operands[k], info.kinds[k]);
        }
      }
      if (report_.size() != before) operands_ok = false;
      if (!kind_allows(f.kind, in.op)) {
        add(f.name, i, Violation::MetaInWrongKind,
            std::string(mnemonic(in.op)) + " in " + std::string(to_string(f.kind)) + " fragment");
      }
    }
    if (operands_ok) check_termination(f);
  }

  // Every path from the fragment entry must reach a terminator before
  // falling off the end of the code.
  void check_termination(const Fragment& f) {
    const std::size_t n = f.code.size();
    std::vector<bool> seen(n + 1, false);
    std::vector<std::size_t> work{0};
    auto target = [&](const Operand& o) {
      auto it = f.labels.find(std::get<Label>(o).name);
      return it == f.labels.end() ? n : it->second;
    };
    while (!work.empty()) {
      const std::size_t pc = work.back();
      work.pop_back();
      if (pc > n || seen[pc]) continue;
      seen[pc] = true;
      if (pc == n) continue;
      const Instruction& in = f.code[pc];
      if (is_terminator(in.op)) continue;
      if (in.op == Opcode::JMP) {
        work.push_back(target(in.operands[0]));
        continue;
      }
      if (is_branch(in.op)) work.push_back(target(in.operands[0]));
      if (in.op == Opcode::QLOOP) work.push_back(target(in.operands[1]));
      work.push_back(pc + 1);
    }
    if (seen[n]) add(f.name, n, Violation::MissingTerminator);
  }

  const ObjectCode& object_;
  ValidationReport report_;
};

}  // namespace

ValidationReport validate(const ObjectCode& object) { return Validator(object).run(); }

}  // namespace empa
