#pragma once

// CTL syntax.
//
//   impl   := or ('->' impl)?
//   or     := and ('|' and)*
//   and    := unary ('&' unary)*
//   unary  := '!' unary | ('EX'|'AX'|'EF'|'AF'|'EG'|'AG') unary
//           | ('E'|'A') '[' impl 'U' impl ']' | '(' impl ')'
//           | 'true' | 'false' | atom
//   atom   := ident ('(' integer ')')?

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

#include "xplan/logic.hpp"

namespace xplan {

enum class CtlOp { tt, ff, atom, negation, conj, disj, implies, ex, ax, ef, af, eg, ag, eu, au };

struct CtlFormula {
  CtlOp op = CtlOp::tt;
  std::string atom;
  std::vector<CtlFormula> args;

  static CtlFormula make_atom(std::string name) { return {CtlOp::atom, std::move(name), {}}; }
  static CtlFormula unary(CtlOp op, CtlFormula a) { return {op, {}, {std::move(a)}}; }
  static CtlFormula binary(CtlOp op, CtlFormula a, CtlFormula b) { return {op, {}, {std::move(a), std::move(b)}}; }
  friend bool operator==(const CtlFormula&, const CtlFormula&) = default;
};

namespace detail {

class CtlParser {
public:
  explicit CtlParser(std::string_view text) : s_(text) {}

  CtlFormula parse() {
    skip_ws();
    if (pos_ >= s_.size()) throw parse_error("empty CTL formula", pos_);
    CtlFormula f = parse_implies();
    skip_ws();
    if (pos_ < s_.size()) throw parse_error("unexpected input '" + std::string(1, s_[pos_]) + "'", pos_);
    return f;
  }

private:
  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool eat(std::string_view tok) {
    skip_ws();
    if (s_.substr(pos_, tok.size()) == tok) {
      pos_ += tok.size();
      return true;
    }
    return false;
  }

  void expect(std::string_view tok) {
    if (!eat(tok)) throw parse_error("expected '" + std::string(tok) + "'", pos_);
  }

  std::string peek_ident() const {
    std::size_t p = pos_;
    std::string out;
    if (p < s_.size() && (std::isalpha(static_cast<unsigned char>(s_[p])) || s_[p] == '_')) {
      while (p < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[p])) || s_[p] == '_')) out.push_back(s_[p++]);
    }
    return out;
  }

  CtlFormula parse_implies() {
    CtlFormula lhs = parse_or();
    if (eat("->")) return CtlFormula::binary(CtlOp::implies, std::move(lhs), parse_implies());
    return lhs;
  }

  CtlFormula parse_or() {
    CtlFormula lhs = parse_and();
    while (eat("|")) lhs = CtlFormula::binary(CtlOp::disj, std::move(lhs), parse_and());
    return lhs;
  }

  CtlFormula parse_and() {
    CtlFormula lhs = parse_unary();
    while (eat("&")) lhs = CtlFormula::binary(CtlOp::conj, std::move(lhs), parse_unary());
    return lhs;
  }

  CtlFormula parse_until(CtlOp op) {
    expect("[");
    CtlFormula lhs = parse_implies();
    skip_ws();
    if (peek_ident() != "U") throw parse_error("expected 'U'", pos_);
    ++pos_;
    CtlFormula rhs = parse_implies();
    expect("]");
    return CtlFormula::binary(op, std::move(lhs), std::move(rhs));
  }

  CtlFormula parse_unary() {
    skip_ws();
    const std::size_t start = pos_;
    if (pos_ >= s_.size()) throw parse_error("expected a formula but input ended", pos_);
    if (eat("!")) return CtlFormula::unary(CtlOp::negation, parse_unary());
    if (eat("(")) {
      CtlFormula f = parse_implies();
      expect(")");
      return f;
    }
    const std::string id = peek_ident();
    if (id.empty()) throw parse_error("expected a formula", start);
    struct Prefix {
      std::string_view name;
      CtlOp op;
    };
    static constexpr Prefix prefixes[] = {{"EX", CtlOp::ex}, {"AX", CtlOp::ax}, {"EF", CtlOp::ef},
                                          {"AF", CtlOp::af}, {"EG", CtlOp::eg}, {"AG", CtlOp::ag}};
    for (const auto& p : prefixes) {
      if (id == p.name) {
        pos_ += id.size();
        return CtlFormula::unary(p.op, parse_unary());
      }
    }
    if (id == "E" || id == "A") {
      pos_ += 1;
      skip_ws();
      if (pos_ < s_.size() && s_[pos_] == '[') return parse_until(id == "E" ? CtlOp::eu : CtlOp::au);
      throw parse_error("expected '[' after path quantifier", pos_);
    }
    if (id == "U") throw parse_error("unexpected 'U'", start);
    pos_ += id.size();
    if (id == "true") return CtlFormula{CtlOp::tt, {}, {}};
    if (id == "false") return CtlFormula{CtlOp::ff, {}, {}};
    std::string atom = id;
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == '(') {
      ++pos_;
      skip_ws();
      const std::size_t num_at = pos_;
      std::string digits;
      while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) digits.push_back(s_[pos_++]);
      if (digits.empty()) throw parse_error("expected an integer argument", num_at);
      expect(")");
      atom += "(" + std::to_string(std::stoi(digits)) + ")";
    }
    return CtlFormula::make_atom(std::move(atom));
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

} // namespace detail

inline CtlFormula parse_ctl(std::string_view text) { return detail::CtlParser(text).parse(); }

inline std::string print_ctl(const CtlFormula& f) {
  auto bin = [&](std::string_view op) { return "(" + print_ctl(f.args[0]) + " " + std::string(op) + " " + print_ctl(f.args[1]) + ")"; };
  switch (f.op) {
  case CtlOp::tt: return "true";
  case CtlOp::ff: return "false";
  case CtlOp::atom: return f.atom;
  case CtlOp::negation: return "!" + print_ctl(f.args[0]);
  case CtlOp::conj: return bin("&");
  case CtlOp::disj: return bin("|");
  case CtlOp::implies: return bin("->");
  case CtlOp::ex: return "EX " + print_ctl(f.args[0]);
  case CtlOp::ax: return "AX " + print_ctl(f.args[0]);
  case CtlOp::ef: return "EF " + print_ctl(f.args[0]);
  case CtlOp::af: return "AF " + print_ctl(f.args[0]);
  case CtlOp::eg: return "EG " + print_ctl(f.args[0]);
  case CtlOp::ag: return "AG " + print_ctl(f.args[0]);
  case CtlOp::eu: return "E[" + print_ctl(f.args[0]) + " U " + print_ctl(f.args[1]) + "]";
  case CtlOp::au: return "A[" + print_ctl(f.args[0]) + " U " + print_ctl(f.args[1]) + "]";
  }
  return "true";
}

} // namespace xplan
