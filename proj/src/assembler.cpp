#include "empa/assembler.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>
#include <set>
#include <sstream>

#include "empa/error.hpp"

namespace empa {

std::string_view to_string(AsmCode code) {
  switch (code) {
    case AsmCode::UnknownOpcode: return "UNKNOWN_OPCODE";
    case AsmCode::DupLabel: return "DUP_LABEL";
    case AsmCode::UndefLabel: return "UNDEF_LABEL";
    case AsmCode::UndefFragment: return "UNDEF_FRAGMENT";
    case AsmCode::MetaInSpa: return "META_IN_SPA";
    case AsmCode::BadOperand: return "BAD_OPERAND";
    case AsmCode::Syntax: return "SYNTAX";
    case AsmCode::Invalid: return "INVALID";
  }
  return "?";
}

std::string format_diagnostic(const SourceUnit& source, const AsmDiagnostic& diag) {
  std::ostringstream os;
  os << source.origin << ":" << diag.line << ":" << diag.column << ": "
     << (diag.severity == AsmDiagnostic::Severity::Error ? "error" : "warning") << " "
     << to_string(diag.code) << ": " << diag.message;
  return os.str();
}

namespace {

struct Token {
  std::string text;
  int column = 1;
};

// Operand as written, before symbol resolution.
struct RawOperand {
  Operand value;
  bool data_ref = false;  // written as @name
  bool bracketed = false;
  int column = 1;
};

struct RawInstruction {
  Opcode op;
  std::vector<RawOperand> operands;
  int line = 1;
  int column = 1;
};

struct RawFragment {
  std::string name;
  FragmentKind kind;
  std::vector<RawInstruction> code;
  std::map<std::string, std::size_t> labels;
  int line = 1;
};

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
}

bool is_identifier(std::string_view s) {
  if (s.empty() || !is_ident_start(s[0])) return false;
  return std::all_of(s.begin() + 1, s.end(), is_ident_char);
}

std::optional<std::int64_t> parse_integer(std::string_view s) {
  if (s.empty()) return std::nullopt;
  bool negative = false;
  if (s[0] == '-' || s[0] == '+') {
    negative = s[0] == '-';
    s.remove_prefix(1);
  }
  int base = 10;
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    base = 16;
    s.remove_prefix(2);
  }
  std::uint64_t magnitude = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), magnitude, base);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  if (negative) return static_cast<std::int64_t>(0 - magnitude);
  return static_cast<std::int64_t>(magnitude);
}

std::string trim(std::string_view s, int* lead = nullptr) {
  std::size_t b = 0;
  while (b < s.size() && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  std::size_t e = s.size();
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  if (lead) *lead = static_cast<int>(b);
  return std::string(s.substr(b, e - b));
}

// Splits on commas, keeping the column of each piece.
std::vector<Token> split_commas(std::string_view text, int base_column) {
  std::vector<Token> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == ',') {
      int lead = 0;
      std::string piece = trim(text.substr(start, i - start), &lead);
      out.push_back({piece, base_column + static_cast<int>(start) + lead});
      start = i + 1;
    }
  }
  return out;
}

class Assembler {
 public:
  Assembler(const SourceUnit& source, AsmMode mode) : source_(source), mode_(mode) {}

  AssembleResult run() {
    pass_one();
    ObjectCode object = pass_two();  // pass 1 drops malformed lines
    if (!has_errors()) check(object);
    AssembleResult result;
    result.diagnostics = std::move(diags_);
    if (!has_errors(result.diagnostics)) result.object = std::move(object);
    return result;
  }

 private:
  static bool has_errors(const std::vector<AsmDiagnostic>& diags) {
    return std::any_of(diags.begin(), diags.end(), [](const AsmDiagnostic& d) {
      return d.severity == AsmDiagnostic::Severity::Error;
    });
  }
  bool has_errors() const { return has_errors(diags_); }

  void error(int line, int column, AsmCode code, std::string message) {
    diags_.push_back({line, column, AsmDiagnostic::Severity::Error, code, std::move(message)});
  }

  enum class Section { None, Data, Code };

  // Pass 1: sections, fragments, labels, data blocks; operands are tokenized
  // but symbols stay unresolved.
  void pass_one() {
    std::istringstream in(source_.text);
    std::string raw_line;
    int line_no = 0;
    while (std::getline(in, raw_line)) {
      ++line_no;
      std::string_view line(raw_line);
      if (auto semi = line.find(';'); semi != std::string_view::npos) line = line.substr(0, semi);
      int lead = 0;
      std::string body = trim(line, &lead);
      int column = lead + 1;
      if (body.empty()) continue;

      if (body[0] == '.' && !body.starts_with(".word")) {
        directive(body, line_no, column);
        continue;
      }

      // Optional `label:` prefix.
      std::string label;
      if (std::size_t colon = body.find(':'); colon != std::string::npos) {
        std::string candidate = trim(std::string_view(body).substr(0, colon));
        if (is_identifier(candidate)) {
          label = candidate;
          int rest_lead = 0;
          std::string rest = trim(std::string_view(body).substr(colon + 1), &rest_lead);
          column += static_cast<int>(colon) + 1 + rest_lead;
          body = rest;
        }
      }

      if (section_ == Section::Data) {
        data_line(label, body, line_no, column);
      } else if (section_ == Section::Code) {
        RawFragment& frag = fragments_[current_];
        if (!label.empty()) {
          if (!frag.labels.emplace(label, frag.code.size()).second) {
            error(line_no, lead + 1, AsmCode::DupLabel, "label '" + label + "' already defined");
          }
        }
        if (!body.empty()) instruction_line(frag, body, line_no, column);
      } else {
        error(line_no, lead + 1, AsmCode::Syntax, "content outside of a section");
      }
    }
  }

  void directive(const std::string& body, int line, int column) {
    std::istringstream words(body);
    std::string name;
    words >> name;
    if (name == ".data") {
      section_ = Section::Data;
    } else if (name == ".code") {
      std::string root_name = "root";
      words >> root_name;
      if (!is_identifier(root_name)) {
        error(line, column, AsmCode::Syntax, "expected '.code [name]'");
        section_ = Section::None;
        return;
      }
      section_ = Section::Code;
      open_fragment(root_name, FragmentKind::Root, line, column, /*reopen=*/true);
    } else if (name == ".frag") {
      std::string frag_name, kind_text;
      words >> frag_name >> kind_text;
      std::optional<FragmentKind> kind;
      if (kind_text.starts_with("kind=")) kind = parse_fragment_kind(kind_text.substr(5));
      if (!is_identifier(frag_name) || !kind || *kind == FragmentKind::Root) {
        error(line, column, AsmCode::Syntax, "expected '.frag name kind=call|stream'");
        section_ = Section::None;
        return;
      }
      section_ = Section::Code;
      open_fragment(frag_name, *kind, line, column, /*reopen=*/false);
    } else {
      error(line, column, AsmCode::Syntax, "unknown directive '" + name + "'");
    }
  }

  void open_fragment(const std::string& name, FragmentKind kind, int line, int column, bool reopen) {
    for (std::size_t i = 0; i < fragments_.size(); ++i) {
      if (fragments_[i].name != name) continue;
      if (reopen && fragments_[i].kind == kind) {
        current_ = i;
        return;
      }
      error(line, column, AsmCode::DupLabel, "fragment '" + name + "' already defined");
      section_ = Section::None;
      return;
    }
    fragments_.push_back({name, kind, {}, {}, line});
    current_ = fragments_.size() - 1;
  }

  void data_line(const std::string& label, const std::string& body, int line, int column) {
    if (!body.starts_with(".word")) {
      error(line, column, AsmCode::Syntax, "expected '.word' in data section");
      return;
    }
    if (!label.empty()) {
      if (!data_labels_.insert(label).second) {
        error(line, 1, AsmCode::DupLabel, "data label '" + label + "' already defined");
        return;
      }
      data_.push_back({label, {}});
    } else if (data_.empty()) {
      error(line, column, AsmCode::Syntax, "unlabeled '.word' with no preceding block");
      return;
    }
    std::string values = body.substr(5);
    if (trim(values).empty()) return;
    for (const Token& t : split_commas(values, column + 5)) {
      auto v = parse_integer(t.text);
      if (!v) {
        error(line, t.column, AsmCode::BadOperand, "bad word '" + t.text + "'");
        continue;
      }
      data_.back().words.push_back(*v);
    }
  }

  void instruction_line(RawFragment& frag, const std::string& body, int line, int column) {
    std::size_t space = body.find_first_of(" \t");
    std::string opname = body.substr(0, space);
    std::string upper = opname;
    std::transform(upper.begin(), upper.end(), upper.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    auto op = parse_opcode(upper);
    if (!op) {
      error(line, column, AsmCode::UnknownOpcode, "unknown opcode '" + opname + "'");
      return;
    }
    RawInstruction inst{*op, {}, line, column};
    if (space != std::string::npos) {
      std::string rest = body.substr(space);
      for (const Token& t : split_commas(rest, column + static_cast<int>(space))) {
        if (t.text.empty()) {
          error(line, t.column, AsmCode::BadOperand, "empty operand");
          return;
        }
        auto operand = parse_operand(t, line);
        if (!operand) return;
        inst.operands.push_back(*operand);
      }
    }
    frag.code.push_back(std::move(inst));
  }

  std::optional<RawOperand> parse_operand(const Token& t, int line) {
    std::string text = t.text;
    RawOperand out;
    out.column = t.column;
    if (text.front() == '[') {
      if (text.back() != ']') {
        error(line, t.column, AsmCode::BadOperand, "unterminated '['");
        return std::nullopt;
      }
      text = trim(std::string_view(text).substr(1, text.size() - 2));
      out.bracketed = true;
    }
    if (text.empty()) {
      error(line, t.column, AsmCode::BadOperand, "empty operand");
      return std::nullopt;
    }
    auto indexed = [&](char prefix, int limit) -> std::optional<int> {
      if (text.size() < 2 || text[0] != prefix) return std::nullopt;
      if (!std::all_of(text.begin() + 1, text.end(), [](unsigned char c) { return std::isdigit(c); })) {
        return std::nullopt;
      }
      int v = std::atoi(text.c_str() + 1);
      if (text.size() > 3 || v >= limit) return -1;
      return v;
    };
    if (auto r = indexed('r', kNumRegisters)) {
      if (*r < 0) {
        error(line, t.column, AsmCode::BadOperand, "register out of range '" + text + "'");
        return std::nullopt;
      }
      out.value = Register{static_cast<std::uint8_t>(*r)};
    } else if (auto p = indexed('p', kNumLinks)) {
      if (*p < 0) {
        error(line, t.column, AsmCode::BadOperand, "latch out of range '" + text + "'");
        return std::nullopt;
      }
      out.value = LatchRef{static_cast<std::uint8_t>(*p)};
    } else if (text[0] == '@' && is_identifier(std::string_view(text).substr(1))) {
      out.value = Label{text.substr(1)};
      out.data_ref = true;
    } else if (auto v = parse_integer(text)) {
      out.value = *v;
    } else if (is_identifier(text)) {
      out.value = Label{text};
    } else {
      error(line, t.column, AsmCode::BadOperand, "cannot parse operand '" + t.text + "'");
      return std::nullopt;
    }
    return out;
  }

  // Pass 2: operand kinds, symbol resolution, SPA restrictions.
  ObjectCode pass_two() {
    ObjectCode object;
    object.data = data_;
    for (const RawFragment& raw : fragments_) {
      Fragment frag{raw.name, raw.kind, {}, raw.labels};
      for (std::size_t i = 0; i < raw.code.size(); ++i) {
        const RawInstruction& ri = raw.code[i];
        lines_[{raw.name, i}] = ri.line;
        if (mode_ == AsmMode::Spa && is_meta(ri.op) && ri.op != Opcode::HALT && ri.op != Opcode::QRET) {
          error(ri.line, ri.column, AsmCode::MetaInSpa,
                std::string(mnemonic(ri.op)) + " is not available in spa mode");
        }
        frag.code.push_back(resolve(raw, ri));
      }
      lines_[{raw.name, raw.code.size()}] = raw.line;
      if (raw.kind == FragmentKind::Root) object.entry = raw.name;
      object.fragments.push_back(std::move(frag));
    }
    return object;
  }

  Instruction resolve(const RawFragment& frag, const RawInstruction& ri) {
    Instruction in{ri.op, {}};
    const OpcodeInfo& info = opcode_info(ri.op);
    if (ri.operands.size() < info.min_arity || ri.operands.size() > info.max_arity) {
      error(ri.line, ri.column, AsmCode::BadOperand,
            std::string(mnemonic(ri.op)) + " takes " + std::to_string(info.min_arity) +
                (info.max_arity != info.min_arity ? ".." + std::to_string(info.max_arity) : "") +
                " operands, got " + std::to_string(ri.operands.size()));
      return in;
    }
    const bool memory_op = ri.op == Opcode::LD || ri.op == Opcode::ST;
    for (std::size_t k = 0; k < ri.operands.size(); ++k) {
      const RawOperand& ro = ri.operands[k];
      const std::uint8_t allowed = info.kinds[k];
      const bool address_slot = memory_op && ((ri.op == Opcode::LD && k == 1) || (ri.op == Opcode::ST && k == 0));
      if (ro.bracketed && !address_slot) {
        error(ri.line, ro.column, AsmCode::BadOperand, "unexpected '[...]' operand");
        continue;
      }
      std::uint8_t kind = 0;
      if (std::holds_alternative<Register>(ro.value)) kind = kReg;
      else if (std::holds_alternative<LatchRef>(ro.value)) kind = kLatch;
      else if (std::holds_alternative<std::int64_t>(ro.value)) kind = kImm;
      else if (ro.data_ref) kind = kDataLabel;
      else if (allowed & kCodeLabel) kind = kCodeLabel;
      else if (allowed & kFragment) kind = kFragment;
      else kind = 0;  // bare identifier where neither a code label nor fragment fits
      if ((kind & allowed) == 0) {
        error(ri.line, ro.column, AsmCode::BadOperand,
              "operand " + std::to_string(k + 1) + " of " + std::string(mnemonic(ri.op)) +
                  " has the wrong kind");
        continue;
      }
      if (kind == kCodeLabel && !frag.labels.count(std::get<Label>(ro.value).name)) {
        error(ri.line, ro.column, AsmCode::UndefLabel,
              "undefined label '" + std::get<Label>(ro.value).name + "'");
      } else if (kind == kDataLabel && !data_labels_.count(std::get<Label>(ro.value).name)) {
        error(ri.line, ro.column, AsmCode::UndefLabel,
              "undefined data label '" + std::get<Label>(ro.value).name + "'");
      } else if (kind == kFragment) {
        const std::string& name = std::get<Label>(ro.value).name;
        auto it = std::find_if(fragments_.begin(), fragments_.end(),
                               [&](const RawFragment& f) { return f.name == name; });
        if (it == fragments_.end()) {
          error(ri.line, ro.column, AsmCode::UndefFragment, "undefined fragment '" + name + "'");
        } else if (it->kind == FragmentKind::Root) {
          error(ri.line, ro.column, AsmCode::UndefFragment, "the root fragment cannot be rented");
        }
      }
      in.operands.push_back(ro.value);
    }
    return in;
  }

  // Whatever the object-level rules still reject (kind rules, missing
  // terminators, missing root) is reported against the nearest source line.
  void check(const ObjectCode& object) {
    for (const ValidationIssue& issue : validate(object)) {
      int line = 1;
      if (auto it = lines_.find({issue.fragment, issue.index.value_or(0)}); it != lines_.end()) {
        line = it->second;
      }
      error(line, 1, AsmCode::Invalid, std::string(to_string(issue.reason)) +
                                           (issue.fragment.empty() ? "" : " in '" + issue.fragment + "'") +
                                           (issue.detail.empty() ? "" : ": " + issue.detail));
    }
  }

  const SourceUnit& source_;
  AsmMode mode_;
  Section section_ = Section::None;
  std::vector<RawFragment> fragments_;
  std::size_t current_ = 0;
  std::vector<DataBlock> data_;
  std::set<std::string> data_labels_;
  std::map<std::pair<std::string, std::size_t>, int> lines_;
  std::vector<AsmDiagnostic> diags_;
};

std::string source_operand(const Instruction& in, std::size_t k, const std::map<std::size_t, std::string>& names,
                           const Fragment& frag) {
  const Operand& o = in.operands[k];
  const std::uint8_t allowed = opcode_info(in.op).kinds[k];
  std::string text;
  if (const auto* l = std::get_if<Label>(&o)) {
    if (allowed & kCodeLabel) {
      text = names.at(frag.labels.at(l->name));
    } else if (allowed & kFragment) {
      text = l->name;
    } else {
      text = "@" + l->name;
    }
  } else {
    text = format_operand(o);
  }
  const bool address_slot = (in.op == Opcode::LD && k == 1) || (in.op == Opcode::ST && k == 0);
  return address_slot ? "[" + text + "]" : text;
}

}  // namespace

AssembleResult assemble(const SourceUnit& source, AsmMode mode) { return Assembler(source, mode).run(); }

SourceUnit disassemble(const ObjectCode& object) {
  const ValidationReport report = validate(object);
  if (!report.empty()) throw Error(Errc::InvalidObject, format_issue(report.front()));

  std::ostringstream os;
  if (!object.data.empty()) {
    os << ".data\n";
    for (const DataBlock& block : object.data) {
      constexpr std::size_t kPerLine = 16;
      os << block.label << ": .word";
      for (std::size_t i = 0; i < block.words.size(); ++i) {
        if (i > 0 && i % kPerLine == 0) os << "\n    .word";
        os << ((i % kPerLine) ? ", " : " ") << block.words[i];
      }
      os << "\n";
    }
  }
  for (const Fragment& frag : object.fragments) {
    if (frag.kind == FragmentKind::Root) {
      os << ".code" << (frag.name == "root" ? "" : " " + frag.name) << "\n";
    } else {
      os << ".frag " << frag.name << " kind=" << to_string(frag.kind) << "\n";
    }
    // Only referenced targets get a label, numbered by position.
    std::set<std::size_t> targets;
    for (const Instruction& in : frag.code) {
      for (std::size_t k = 0; k < in.operands.size(); ++k) {
        if ((opcode_info(in.op).kinds[k] & kCodeLabel) && std::holds_alternative<Label>(in.operands[k])) {
          targets.insert(frag.labels.at(std::get<Label>(in.operands[k]).name));
        }
      }
    }
    std::map<std::size_t, std::string> names;
    for (std::size_t t : targets) names[t] = "L" + std::to_string(names.size());
    for (std::size_t i = 0; i <= frag.code.size(); ++i) {
      if (auto it = names.find(i); it != names.end()) os << it->second << ":\n";
      if (i == frag.code.size()) break;
      const Instruction& in = frag.code[i];
      os << "    " << mnemonic(in.op);
      for (std::size_t k = 0; k < in.operands.size(); ++k) {
        os << (k ? ", " : " ") << source_operand(in, k, names, frag);
      }
      os << "\n";
    }
  }
  return {os.str(), "<disassembly>"};
}

}  // namespace empa
