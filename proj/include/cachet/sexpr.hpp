#pragma once

// Minimal s-expression reader, shared by the solver response parser and the
// patch-file loader, plus formula parsing from s-expressions.

#include <cctype>
#include <string>
#include <vector>

#include "cachet/formula.hpp"

namespace cachet {

struct SExpr {
  bool is_atom = true;
  std::string atom;
  std::vector<SExpr> items;

  const SExpr& operator[](size_t k) const { return items[k]; }
  size_t size() const { return items.size(); }
};

struct SExprError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void skip_sexpr_ws(const std::string& s, size_t& p) {
  while (p < s.size()) {
    if (std::isspace(static_cast<unsigned char>(s[p]))) {
      ++p;
    } else if (s[p] == ';') {
      while (p < s.size() && s[p] != '\n') ++p;
    } else {
      break;
    }
  }
}

inline SExpr parse_sexpr_at(const std::string& s, size_t& p) {
  skip_sexpr_ws(s, p);
  if (p >= s.size()) throw SExprError("unexpected end of s-expression input");
  SExpr e;
  if (s[p] == '(') {
    ++p;
    e.is_atom = false;
    for (;;) {
      skip_sexpr_ws(s, p);
      if (p >= s.size()) throw SExprError("unbalanced s-expression");
      if (s[p] == ')') {
        ++p;
        return e;
      }
      e.items.push_back(parse_sexpr_at(s, p));
    }
  }
  if (s[p] == '"') {
    size_t start = p++;
    while (p < s.size() && s[p] != '"') ++p;
    if (p >= s.size()) throw SExprError("unterminated string");
    ++p;
    e.atom = s.substr(start, p - start);
    return e;
  }
  size_t start = p;
  while (p < s.size() && !std::isspace(static_cast<unsigned char>(s[p])) && s[p] != '(' &&
         s[p] != ')')
    ++p;
  e.atom = s.substr(start, p - start);
  if (e.atom.empty()) throw SExprError("empty atom");
  return e;
}

}  // namespace detail

inline std::vector<SExpr> parse_sexprs(const std::string& text) {
  std::vector<SExpr> out;
  size_t p = 0;
  for (;;) {
    detail::skip_sexpr_ws(text, p);
    if (p >= text.size()) break;
    out.push_back(detail::parse_sexpr_at(text, p));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Formula parsing (inverse of emit_smt for the node kinds we produce)

inline Formula parse_formula(const SExpr& e,
                             const std::unordered_map<std::string, Sort>& vars) {
  if (e.is_atom) {
    const std::string& a = e.atom;
    if (a == "true") return f_true();
    if (a == "false") return f_false();
    if (a.rfind("#x", 0) == 0) return f_bv(static_cast<uint32_t>(std::stoull(a.substr(2), nullptr, 16)));
    if (a.rfind("#b", 0) == 0) return f_bv(static_cast<uint32_t>(std::stoull(a.substr(2), nullptr, 2)));
    if (std::isdigit(static_cast<unsigned char>(a[0])))
      return f_int(static_cast<int64_t>(std::stoll(a)));
    auto it = vars.find(a);
    if (it == vars.end()) throw SExprError("unknown symbol '" + a + "'");
    return f_var(a, it->second);
  }
  if (e.size() == 0) throw SExprError("empty application");
  // ((_ extract hi lo) x)
  if (!e[0].is_atom && e[0].size() == 4 && e[0][0].atom == "_" && e[0][1].atom == "extract") {
    return f_extract(static_cast<uint32_t>(std::stoul(e[0][2].atom)),
                     static_cast<uint32_t>(std::stoul(e[0][3].atom)), parse_formula(e[1], vars));
  }
  const std::string& op = e[0].atom;
  std::vector<Formula> args;
  for (size_t k = 1; k < e.size(); ++k) args.push_back(parse_formula(e[k], vars));
  auto bin = [&](const char* what) -> std::pair<Formula, Formula> {
    if (args.size() != 2) throw SExprError(std::string("expected 2 arguments for ") + what);
    return {args[0], args[1]};
  };
  if (op == "not") return f_not(args.at(0));
  if (op == "and") return f_and(args);
  if (op == "or") return f_or(args);
  if (op == "=>") {
    auto [a, b] = bin("=>");
    return f_implies(a, b);
  }
  if (op == "=") {
    auto [a, b] = bin("=");
    return a->sort == Sort::Bool ? f_iff(a, b) : f_eq(a, b);
  }
  if (op == "ite") {
    if (args.size() != 3) throw SExprError("expected 3 arguments for ite");
    return f_ite(args[0], args[1], args[2]);
  }
  if (op == "-" && args.size() == 1 && args[0]->op == FOp::IntConst)
    return f_int(-static_cast<int64_t>(args[0]->value));
  if (op == "+") return f_add(args);
  if (op == "<=") {
    auto [a, b] = bin("<=");
    return f_le(a, b);
  }
  if (op == "<") {
    auto [a, b] = bin("<");
    return f_lt(a, b);
  }
  if (op == ">=") {
    auto [a, b] = bin(">=");
    return f_ge(a, b);
  }
  if (op == ">") {
    auto [a, b] = bin(">");
    return f_gt(a, b);
  }
  static const std::unordered_map<std::string, FOp> bvops = {
      {"bvule", FOp::Ule},   {"bvult", FOp::Ult},   {"bvuge", FOp::Uge},
      {"bvugt", FOp::Ugt},   {"bvadd", FOp::BvAdd}, {"bvsub", FOp::BvSub},
      {"bvmul", FOp::BvMul}, {"bvand", FOp::BvAnd}, {"bvor", FOp::BvOr},
      {"bvxor", FOp::BvXor}, {"bvshl", FOp::BvShl}, {"bvlshr", FOp::BvLshr}};
  auto bit = bvops.find(op);
  if (bit != bvops.end()) {
    auto [a, b] = bin(op.c_str());
    Sort sort = (bit->second == FOp::Ule || bit->second == FOp::Ult ||
                 bit->second == FOp::Uge || bit->second == FOp::Ugt)
                    ? Sort::Bool
                    : Sort::Bv;
    return mk_node(bit->second, sort, {a, b});
  }
  throw SExprError("unsupported operator '" + op + "'");
}

}  // namespace cachet
