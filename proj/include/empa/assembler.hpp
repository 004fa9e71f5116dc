#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "empa/isa.hpp"

namespace empa {

// Assembly text (`.emps`). Grammar:
//   ; comment
//   .data                         data section, blocks laid out in order
//   name: .word v0, v1, ...       an unlabeled .word line extends the previous block
//   .frag name kind=call|stream   start a rentable fragment
//   .code                         start (or resume) the root fragment
//   label: OPC op, op, ...        labels may also stand on their own line
// Operands: r0..r7, p0..p3, integers, @data for data addresses, bare
// identifiers for code labels and fragment names, [x] for LD/ST addresses.
struct SourceUnit {
  std::string text;
  std::string origin = "<memory>";
};

enum class AsmMode { Empa, Spa };

enum class AsmCode {
  UnknownOpcode,
  DupLabel,
  UndefLabel,
  UndefFragment,
  MetaInSpa,
  BadOperand,
  Syntax,
  Invalid,
};

std::string_view to_string(AsmCode code);

struct AsmDiagnostic {
  int line = 1;
  int column = 1;
  enum class Severity { Error, Warning } severity = Severity::Error;
  AsmCode code = AsmCode::Syntax;
  std::string message;
};

struct AssembleResult {
  std::optional<ObjectCode> object;
  std::vector<AsmDiagnostic> diagnostics;

  bool ok() const { return object.has_value(); }
};

AssembleResult assemble(const SourceUnit& source, AsmMode mode = AsmMode::Empa);

// Canonical source for a valid object; code labels are renamed L0, L1, ...
SourceUnit disassemble(const ObjectCode& object);

// `file:line:col: severity CODE: message`
std::string format_diagnostic(const SourceUnit& source, const AsmDiagnostic& diag);

}  // namespace empa
