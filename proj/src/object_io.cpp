#include <charconv>
#include <sstream>

#include <json.hpp>

#include "empa/error.hpp"
#include "empa/isa.hpp"

namespace empa {

using nlohmann::json;

namespace {

json operand_to_json(const Operand& operand) {
  if (const auto* v = std::get_if<std::int64_t>(&operand)) return *v;
  return format_operand(operand);
}

[[noreturn]] void malformed(const std::string& what) { throw Error(Errc::Malformed, what); }

std::uint8_t parse_index(std::string_view digits, const std::string& text) {
  unsigned value = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (digits.empty() || ec != std::errc{} || ptr != digits.data() + digits.size() || value > 255) {
    malformed("bad operand '" + text + "'");
  }
  return static_cast<std::uint8_t>(value);
}

Operand operand_from_json(const json& j) {
  if (j.is_number_integer()) return j.get<std::int64_t>();
  if (!j.is_string()) malformed("operand must be string or integer");
  const std::string text = j.get<std::string>();
  if (text.size() >= 2 && text[0] == '@') return Label{text.substr(1)};
  if (text.size() >= 2 && text[0] == 'r') return Register{parse_index(std::string_view(text).substr(1), text)};
  if (text.size() >= 2 && text[0] == 'p') return LatchRef{parse_index(std::string_view(text).substr(1), text)};
  malformed("bad operand '" + text + "'");
}

const json& require(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) malformed(std::string("missing key '") + key + "'");
  return j.at(key);
}

}  // namespace

std::string encode(const ObjectCode& object) {
  const ValidationReport report = validate(object);
  if (!report.empty()) throw Error(Errc::InvalidObject, format_issue(report.front()));

  // Hand-laid JSON: one instruction per line keeps files diffable.
  std::ostringstream os;
  os << "{\n";
  os << "  \"version\": " << object.version << ",\n";
  os << "  \"entry\": " << json(object.entry).dump() << ",\n";
  os << "  \"fragments\": [";
  for (std::size_t f = 0; f < object.fragments.size(); ++f) {
    const Fragment& frag = object.fragments[f];
    os << (f ? ",\n" : "\n");
    json labels = json::object();
    for (const auto& [name, index] : frag.labels) labels[name] = index;
    os << "    {\n";
    os << "      \"name\": " << json(frag.name).dump() << ",\n";
    os << "      \"kind\": \"" << to_string(frag.kind) << "\",\n";
    os << "      \"labels\": " << labels.dump() << ",\n";
    os << "      \"code\": [";
    for (std::size_t i = 0; i < frag.code.size(); ++i) {
      json in = json::array({std::string(mnemonic(frag.code[i].op))});
      for (const auto& o : frag.code[i].operands) in.push_back(operand_to_json(o));
      os << (i ? ",\n        " : "\n        ") << in.dump();
    }
    os << (frag.code.empty() ? "]\n" : "\n      ]\n");
    os << "    }";
  }
  os << (object.fragments.empty() ? "],\n" : "\n  ],\n");
  os << "  \"data\": [";
  for (std::size_t d = 0; d < object.data.size(); ++d) {
    json block = {{"label", object.data[d].label}, {"words", object.data[d].words}};
    os << (d ? ",\n    " : "\n    ") << block.dump();
  }
  os << (object.data.empty() ? "]\n" : "\n  ]\n");
  os << "}\n";
  return os.str();
}

ObjectCode decode(std::string_view bytes) {
  json root;
  try {
    root = json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    malformed(e.what());
  }
  try {
    const json& version = require(root, "version");
    if (!version.is_number_integer()) malformed("version must be an integer");
    if (version.get<int>() != kFormatVersion) {
      throw Error(Errc::UnsupportedVersion, "object format version " + version.dump());
    }
    ObjectCode object;
    object.version = version.get<int>();
    object.entry = require(root, "entry").get<std::string>();
    const json& frags = require(root, "fragments");
    if (!frags.is_array()) malformed("fragments must be an array");
    for (const json& jf : frags) {
      Fragment frag;
      frag.name = require(jf, "name").get<std::string>();
      auto kind = parse_fragment_kind(require(jf, "kind").get<std::string>());
      if (!kind) malformed("bad fragment kind in '" + frag.name + "'");
      frag.kind = *kind;
      for (const auto& [name, index] : require(jf, "labels").items()) {
        frag.labels[name] = index.get<std::size_t>();
      }
      for (const json& ji : require(jf, "code")) {
        if (!ji.is_array() || ji.empty() || !ji[0].is_string()) malformed("bad instruction");
        auto op = parse_opcode(ji[0].get<std::string>());
        if (!op) malformed("unknown opcode " + ji[0].dump());
        Instruction in{*op, {}};
        for (std::size_t k = 1; k < ji.size(); ++k) in.operands.push_back(operand_from_json(ji[k]));
        frag.code.push_back(std::move(in));
      }
      object.fragments.push_back(std::move(frag));
    }
    for (const json& jd : require(root, "data")) {
      object.data.push_back({require(jd, "label").get<std::string>(),
                             require(jd, "words").get<std::vector<std::int64_t>>()});
    }
    return object;
  } catch (const json::exception& e) {
    malformed(e.what());
  }
}

}  // namespace empa
