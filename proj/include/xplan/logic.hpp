#pragma once

// Evidence formulas.
//
//   list    := formula (';' formula)*
//   formula := name '(' arg (',' arg)* ')'
//   arg     := integer | formula
//
// Names are case-insensitive. The comparison templates accept both the
// Greek glyph (Φ1, φ1) and ASCII (phi1). Every name has a fixed arity and a
// fixed operand level; the variables form three levels (base, derived,
// comparison) plus the what-if operators, and nesting never exceeds 3.

#include <algorithm>
#include <array>
#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "xplan/common.hpp"

namespace xplan {

enum class TermKind { integer, base, derived, compare, whatif };

struct Term {
  TermKind kind = TermKind::integer;
  std::string name; // canonical lowercase; empty for integers
  int value = 0;    // integers only
  std::vector<Term> args;

  static Term integer(int v) { return Term{TermKind::integer, {}, v, {}}; }
  bool is_integer() const { return kind == TermKind::integer; }
  friend bool operator==(const Term&, const Term&) = default;
};

using FormulaList = std::vector<Term>;

/// Parse failure with the byte offset of the offending input.
class parse_error : public domain_error {
public:
  parse_error(const std::string& what, std::size_t position)
      : domain_error(what + " at column " + std::to_string(position + 1)), position_(position) {}
  std::size_t position() const { return position_; }
  std::size_t column() const { return position_ + 1; }

private:
  std::size_t position_;
};

enum class ArgRule {
  integers,  // every argument is an integer
  time_eta,  // (tp|td, eta)
  cap_occ,   // (C, O)
  variables, // base or derived variables
};

struct VariableSpec {
  std::string_view name;
  TermKind kind;
  int arity;
  ArgRule rule;
};

inline constexpr std::array<VariableSpec, 27> kVariables{{
    {"tp", TermKind::base, 1, ArgRule::integers},
    {"td", TermKind::base, 1, ArgRule::integers},
    {"c", TermKind::base, 1, ArgRule::integers},
    {"o", TermKind::base, 2, ArgRule::integers},
    {"eta", TermKind::base, 1, ArgRule::integers},
    {"sp", TermKind::base, 2, ArgRule::integers},
    {"sd", TermKind::base, 2, ArgRule::integers},
    {"car", TermKind::base, 1, ArgRule::integers},
    {"availablecar", TermKind::base, 1, ArgRule::integers},
    {"viod", TermKind::derived, 2, ArgRule::time_eta},
    {"vioa", TermKind::derived, 2, ArgRule::time_eta},
    {"pctd", TermKind::derived, 2, ArgRule::time_eta},
    {"pcta", TermKind::derived, 2, ArgRule::time_eta},
    {"vcv", TermKind::derived, 2, ArgRule::cap_occ},
    {"vcvq", TermKind::derived, 2, ArgRule::cap_occ},
    {"r", TermKind::derived, 1, ArgRule::integers},
    {"rd1", TermKind::derived, 1, ArgRule::integers},
    {"rd2", TermKind::derived, 1, ArgRule::integers},
    {"phi1", TermKind::compare, 2, ArgRule::variables},
    {"phi2", TermKind::compare, 2, ArgRule::variables},
    {"phi3", TermKind::compare, 2, ArgRule::variables},
    {"phi4", TermKind::compare, 2, ArgRule::variables},
    {"search", TermKind::whatif, 1, ArgRule::integers},
    {"cong", TermKind::whatif, 1, ArgRule::integers},
    {"exclude", TermKind::whatif, 1, ArgRule::integers},
    {"multi", TermKind::whatif, 1, ArgRule::integers},
    {"reassign", TermKind::whatif, 1, ArgRule::integers},
}};

inline constexpr int kMaxNesting = 3;

inline const VariableSpec* find_variable(std::string_view name) {
  for (const auto& v : kVariables)
    if (v.name == name) return &v;
  return nullptr;
}

inline int nesting_depth(const Term& t) {
  if (t.is_integer()) return 0;
  int d = 0;
  for (const auto& a : t.args) d = std::max(d, nesting_depth(a));
  return d + 1;
}

namespace detail {

class FormulaParser {
public:
  explicit FormulaParser(std::string_view text) : s_(text) {}

  FormulaList parse_list() {
    FormulaList out;
    skip_ws();
    if (pos_ >= s_.size()) throw parse_error("empty formula", pos_);
    out.push_back(parse_formula(1));
    skip_ws();
    while (pos_ < s_.size() && s_[pos_] == ';') {
      ++pos_;
      out.push_back(parse_formula(1));
      skip_ws();
    }
    if (pos_ < s_.size()) throw parse_error("unexpected input '" + std::string(1, s_[pos_]) + "'", pos_);
    return out;
  }

private:
  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool at_phi_glyph() const {
    if (pos_ + 1 >= s_.size()) return false;
    const auto a = static_cast<unsigned char>(s_[pos_]);
    const auto b = static_cast<unsigned char>(s_[pos_ + 1]);
    return (a == 0xCE && b == 0xA6) || (a == 0xCF && b == 0x86); // Φ, φ
  }

  std::string read_name() {
    std::string name;
    if (at_phi_glyph()) {
      pos_ += 2;
      name = "phi";
    }
    while (pos_ < s_.size()) {
      const auto c = static_cast<unsigned char>(s_[pos_]);
      if (!(std::isalnum(c) || c == '_')) break;
      name.push_back(static_cast<char>(std::tolower(c)));
      ++pos_;
    }
    return name;
  }

  void expect(char c) {
    skip_ws();
    if (pos_ >= s_.size()) throw parse_error(std::string("expected '") + c + "' but input ended", pos_);
    if (s_[pos_] != c) throw parse_error(std::string("expected '") + c + "'", pos_);
    ++pos_;
  }

  Term parse_integer() {
    const std::size_t start = pos_;
    long long v = 0;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
      v = v * 10 + (s_[pos_] - '0');
      if (v > 1000000000) throw parse_error("integer out of range", start);
      ++pos_;
    }
    return Term::integer(static_cast<int>(v));
  }

  Term parse_arg(int depth) {
    skip_ws();
    if (pos_ >= s_.size()) throw parse_error("expected an argument but input ended", pos_);
    if (std::isdigit(static_cast<unsigned char>(s_[pos_]))) return parse_integer();
    return parse_formula(depth);
  }

  Term parse_formula(int depth) {
    skip_ws();
    const std::size_t start = pos_;
    if (pos_ >= s_.size()) throw parse_error("expected a variable name but input ended", pos_);
    std::string name = read_name();
    if (name.empty()) throw parse_error("expected a variable name", start);
    const VariableSpec* spec = find_variable(name);
    if (!spec) throw parse_error("unknown variable '" + name + "'", start);
    if (depth > kMaxNesting) throw parse_error("nesting deeper than " + std::to_string(kMaxNesting), start);
    Term t{spec->kind, std::string(spec->name), 0, {}};
    expect('(');
    std::vector<std::size_t> arg_pos;
    for (;;) {
      skip_ws();
      arg_pos.push_back(pos_);
      t.args.push_back(parse_arg(depth + 1));
      skip_ws();
      if (pos_ < s_.size() && s_[pos_] == ',') {
        ++pos_;
        continue;
      }
      break;
    }
    expect(')');
    if (static_cast<int>(t.args.size()) != spec->arity)
      throw parse_error("'" + name + "' takes " + std::to_string(spec->arity) + " argument(s), got " +
                            std::to_string(t.args.size()),
                        start);
    check_operands(*spec, t, arg_pos);
    return t;
  }

  void check_operands(const VariableSpec& spec, const Term& t, const std::vector<std::size_t>& at) const {
    for (std::size_t i = 0; i < t.args.size(); ++i) {
      const Term& a = t.args[i];
      const std::string where = "'" + std::string(spec.name) + "' argument " + std::to_string(i + 1);
      switch (spec.rule) {
      case ArgRule::integers:
        if (!a.is_integer()) throw parse_error(where + " must be an integer", at[i]);
        break;
      case ArgRule::time_eta: {
        const bool ok = i == 0 ? (a.name == "tp" || a.name == "td") : a.name == "eta";
        if (!ok) throw parse_error(where + (i == 0 ? " must be tp(..) or td(..)" : " must be eta(..)"), at[i]);
        break;
      }
      case ArgRule::cap_occ: {
        const bool ok = i == 0 ? a.name == "c" : a.name == "o";
        if (!ok) throw parse_error(where + (i == 0 ? " must be C(..)" : " must be O(..)"), at[i]);
        break;
      }
      case ArgRule::variables:
        if (a.kind != TermKind::base && a.kind != TermKind::derived)
          throw parse_error(where + " must be a base or derived variable", at[i]);
        break;
      }
    }
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

} // namespace detail

inline FormulaList parse_formula(std::string_view text) { return detail::FormulaParser(text).parse_list(); }

inline std::string print_term(const Term& t) {
  if (t.is_integer()) return std::to_string(t.value);
  std::string out = t.name + "(";
  for (std::size_t i = 0; i < t.args.size(); ++i) {
    if (i) out += ", ";
    out += print_term(t.args[i]);
  }
  return out + ")";
}

inline std::string print_formula(const FormulaList& list) {
  std::string out;
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (i) out += "; ";
    out += print_term(list[i]);
  }
  return out;
}

inline std::string canonicalize(std::string_view text) { return print_formula(parse_formula(text)); }

enum class EvidenceLevel { base = 1, derived = 2, comparison = 3, what_if = 4 };

inline std::string_view to_string(EvidenceLevel l) {
  switch (l) {
  case EvidenceLevel::base: return "base";
  case EvidenceLevel::derived: return "derived";
  case EvidenceLevel::comparison: return "comparison";
  case EvidenceLevel::what_if: return "what_if";
  }
  return "base";
}

/// Highest evidence level used by a formula list.
inline EvidenceLevel evidence_level(const FormulaList& list) {
  EvidenceLevel out = EvidenceLevel::base;
  for (const auto& t : list) {
    EvidenceLevel l = EvidenceLevel::base;
    if (t.kind == TermKind::derived) l = EvidenceLevel::derived;
    if (t.kind == TermKind::compare) l = EvidenceLevel::comparison;
    if (t.kind == TermKind::whatif) l = EvidenceLevel::what_if;
    out = std::max(out, l);
  }
  return out;
}

} // namespace xplan
