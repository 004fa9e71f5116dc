#pragma once

// EMPA-8 instruction set: eight 64-bit registers r0..r7, four link latches
// p0..p3 (pseudo-registers outside the register file), payload opcodes that
// cost one cycle and metainstructions that cost none.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace empa {

inline constexpr int kNumRegisters = 8;
inline constexpr int kNumLinks = 4;
inline constexpr int kFormatVersion = 1;

struct Register {
  std::uint8_t index = 0;
  friend bool operator==(const Register&, const Register&) = default;
};

struct LatchRef {
  std::uint8_t link = 0;
  friend bool operator==(const LatchRef&, const LatchRef&) = default;
};

// Symbolic reference: a data label, a code label or a fragment name depending
// on the operand position.
struct Label {
  std::string name;
  friend bool operator==(const Label&, const Label&) = default;
};

using Operand = std::variant<Register, LatchRef, std::int64_t, Label>;

enum class Opcode : std::uint8_t {
  // payload
  LDI, LD, ST, MOV, ADD, SUB, MUL, CMP, BEQ, BNE, BLT, JMP,
  // meta
  QRENT, QRET, QPUT, QEND, QKILL, QLOOP, QSIG, QWSIG, HALT,
};

inline constexpr int kNumOpcodes = static_cast<int>(Opcode::HALT) + 1;

std::string_view mnemonic(Opcode op);
std::optional<Opcode> parse_opcode(std::string_view text);

bool is_meta(Opcode op);
inline bool is_payload(Opcode op) { return !is_meta(op); }
// 1 for payload, 0 for meta.
int cycle_cost(Opcode op);

// Operand kinds accepted at a position. Imm positions also accept data labels.
enum OperandKind : std::uint8_t {
  kReg = 1 << 0,
  kLatch = 1 << 1,
  kImm = 1 << 2,
  kDataLabel = 1 << 3,
  kCodeLabel = 1 << 4,
  kFragment = 1 << 5,
};

struct OpcodeInfo {
  Opcode op;
  std::uint8_t min_arity;
  std::uint8_t max_arity;
  std::uint8_t kinds[4];
};

const OpcodeInfo& opcode_info(Opcode op);

struct Instruction {
  Opcode op = Opcode::HALT;
  std::vector<Operand> operands;
  friend bool operator==(const Instruction&, const Instruction&) = default;
};

enum class FragmentKind : std::uint8_t { Root, Call, Stream };

std::string_view to_string(FragmentKind kind);
std::optional<FragmentKind> parse_fragment_kind(std::string_view text);

struct Fragment {
  std::string name;
  FragmentKind kind = FragmentKind::Call;
  std::vector<Instruction> code;
  std::map<std::string, std::size_t> labels;  // label -> instruction index (== size allowed)
  friend bool operator==(const Fragment&, const Fragment&) = default;
};

struct DataBlock {
  std::string label;
  std::vector<std::int64_t> words;
  friend bool operator==(const DataBlock&, const DataBlock&) = default;
};

struct ObjectCode {
  int version = kFormatVersion;
  std::string entry = "root";
  std::vector<Fragment> fragments;  // declaration order
  std::vector<DataBlock> data;      // laid out contiguously from address 0

  const Fragment* find_fragment(std::string_view name) const;
  std::optional<std::int64_t> data_address(std::string_view label) const;
  std::vector<std::int64_t> initial_memory() const;
  bool has_empa_metas() const;

  friend bool operator==(const ObjectCode&, const ObjectCode&) = default;
};

enum class Violation : std::uint8_t {
  NoRoot,
  MultipleRoots,
  BadEntry,
  DuplicateFragment,
  DuplicateDataLabel,
  Arity,
  OperandKind,
  RegisterRange,
  LatchRange,
  UndefinedCodeLabel,
  LabelRange,
  UndefinedFragment,
  RentsRoot,
  UndefinedDataLabel,
  MetaInWrongKind,
  MissingTerminator,
};

std::string_view to_string(Violation reason);

struct ValidationIssue {
  std::string fragment;
  std::optional<std::size_t> index;
  Violation reason;
  std::string detail;
};

using ValidationReport = std::vector<ValidationIssue>;

ValidationReport validate(const ObjectCode& object);
std::string format_issue(const ValidationIssue& issue);

// Structured-text (JSON) object-code format, extension `.empo`.
std::string encode(const ObjectCode& object);
ObjectCode decode(std::string_view bytes);

std::string format_operand(const Operand& operand);

}  // namespace empa
