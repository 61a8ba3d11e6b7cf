#pragma once

// Solver-facing formula trees: booleans, integers and 32-bit bitvectors.
// Nodes are immutable and shared; builders do light constant folding so the
// usual empty-conjunction/disjunction conventions fall out naturally.

#include <cstdint>
#include <cstdio>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace cachet {

enum class Sort { Bool, Int, Bv };

enum class FOp {
  BoolConst,
  IntConst,
  BvConst,
  Var,
  Not,
  And,
  Or,
  Implies,
  Iff,
  Ite,
  Eq,
  Le,
  Lt,
  Ge,
  Gt,
  Ule,
  Ult,
  Uge,
  Ugt,
  Add,
  BvAdd,
  BvSub,
  BvMul,
  BvAnd,
  BvOr,
  BvXor,
  BvShl,
  BvLshr,
  Extract,
};

struct FNode;
using Formula = std::shared_ptr<const FNode>;

struct FNode {
  FOp op;
  Sort sort;
  uint64_t value = 0;  // constants; Extract packs hi<<8|lo
  std::string name;    // variables
  std::vector<Formula> args;
};

struct FormulaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline Formula mk_node(FOp op, Sort sort, std::vector<Formula> args = {},
                       uint64_t value = 0, std::string name = {}) {
  auto n = std::make_shared<FNode>();
  n->op = op;
  n->sort = sort;
  n->value = value;
  n->name = std::move(name);
  n->args = std::move(args);
  return n;
}

inline Formula f_bool(bool b) { return mk_node(FOp::BoolConst, Sort::Bool, {}, b ? 1 : 0); }
inline Formula f_true() { return f_bool(true); }
inline Formula f_false() { return f_bool(false); }
inline Formula f_int(int64_t v) {
  return mk_node(FOp::IntConst, Sort::Int, {}, static_cast<uint64_t>(v));
}
inline Formula f_bv(uint32_t v) { return mk_node(FOp::BvConst, Sort::Bv, {}, v); }
inline Formula f_var(std::string name, Sort sort) {
  return mk_node(FOp::Var, sort, {}, 0, std::move(name));
}

inline bool is_const_bool(const Formula& f, bool b) {
  return f->op == FOp::BoolConst && (f->value != 0) == b;
}

inline Formula f_not(const Formula& a) {
  if (a->op == FOp::BoolConst) return f_bool(a->value == 0);
  if (a->op == FOp::Not) return a->args[0];
  return mk_node(FOp::Not, Sort::Bool, {a});
}

inline Formula f_and(std::vector<Formula> args) {
  std::vector<Formula> flat;
  for (auto& a : args) {
    if (is_const_bool(a, false)) return f_false();
    if (is_const_bool(a, true)) continue;
    if (a->op == FOp::And) {
      flat.insert(flat.end(), a->args.begin(), a->args.end());
    } else {
      flat.push_back(a);
    }
  }
  if (flat.empty()) return f_true();
  if (flat.size() == 1) return flat[0];
  return mk_node(FOp::And, Sort::Bool, std::move(flat));
}

inline Formula f_or(std::vector<Formula> args) {
  std::vector<Formula> flat;
  for (auto& a : args) {
    if (is_const_bool(a, true)) return f_true();
    if (is_const_bool(a, false)) continue;
    if (a->op == FOp::Or) {
      flat.insert(flat.end(), a->args.begin(), a->args.end());
    } else {
      flat.push_back(a);
    }
  }
  if (flat.empty()) return f_false();
  if (flat.size() == 1) return flat[0];
  return mk_node(FOp::Or, Sort::Bool, std::move(flat));
}

inline Formula f_and(const Formula& a, const Formula& b) { return f_and(std::vector<Formula>{a, b}); }
inline Formula f_or(const Formula& a, const Formula& b) { return f_or(std::vector<Formula>{a, b}); }

inline Formula f_implies(const Formula& a, const Formula& b) {
  if (is_const_bool(a, true)) return b;
  if (is_const_bool(a, false)) return f_true();
  if (is_const_bool(b, true)) return f_true();
  if (is_const_bool(b, false)) return f_not(a);
  return mk_node(FOp::Implies, Sort::Bool, {a, b});
}

inline Formula f_iff(const Formula& a, const Formula& b) {
  if (a->op == FOp::BoolConst) return a->value ? b : f_not(b);
  if (b->op == FOp::BoolConst) return b->value ? a : f_not(a);
  return mk_node(FOp::Iff, Sort::Bool, {a, b});
}

inline Formula f_ite(const Formula& c, const Formula& t, const Formula& e) {
  if (t->sort != e->sort) throw FormulaError("ite branch sorts differ");
  if (c->op == FOp::BoolConst) return c->value ? t : e;
  return mk_node(FOp::Ite, t->sort, {c, t, e});
}

inline Formula f_eq(const Formula& a, const Formula& b) {
  if (a->sort != b->sort) throw FormulaError("eq argument sorts differ");
  if (a->op == FOp::BvConst && b->op == FOp::BvConst) return f_bool(a->value == b->value);
  if (a->op == FOp::IntConst && b->op == FOp::IntConst) return f_bool(a->value == b->value);
  return mk_node(FOp::Eq, Sort::Bool, {a, b});
}
inline Formula f_ne(const Formula& a, const Formula& b) { return f_not(f_eq(a, b)); }

inline Formula mk_cmp(FOp op, const Formula& a, const Formula& b) {
  return mk_node(op, Sort::Bool, {a, b});
}
inline Formula f_le(const Formula& a, const Formula& b) { return mk_cmp(FOp::Le, a, b); }
inline Formula f_lt(const Formula& a, const Formula& b) { return mk_cmp(FOp::Lt, a, b); }
inline Formula f_ge(const Formula& a, const Formula& b) { return mk_cmp(FOp::Ge, a, b); }
inline Formula f_gt(const Formula& a, const Formula& b) { return mk_cmp(FOp::Gt, a, b); }
inline Formula f_ule(const Formula& a, const Formula& b) { return mk_cmp(FOp::Ule, a, b); }
inline Formula f_ult(const Formula& a, const Formula& b) { return mk_cmp(FOp::Ult, a, b); }
inline Formula f_uge(const Formula& a, const Formula& b) { return mk_cmp(FOp::Uge, a, b); }
inline Formula f_ugt(const Formula& a, const Formula& b) { return mk_cmp(FOp::Ugt, a, b); }

inline Formula f_add(std::vector<Formula> args) {
  if (args.empty()) return f_int(0);
  if (args.size() == 1) return args[0];
  return mk_node(FOp::Add, Sort::Int, std::move(args));
}

inline Formula mk_bvop(FOp op, const Formula& a, const Formula& b) {
  return mk_node(op, Sort::Bv, {a, b});
}
inline Formula f_bvadd(const Formula& a, const Formula& b) { return mk_bvop(FOp::BvAdd, a, b); }
inline Formula f_bvsub(const Formula& a, const Formula& b) { return mk_bvop(FOp::BvSub, a, b); }
inline Formula f_bvmul(const Formula& a, const Formula& b) { return mk_bvop(FOp::BvMul, a, b); }
inline Formula f_bvand(const Formula& a, const Formula& b) { return mk_bvop(FOp::BvAnd, a, b); }
inline Formula f_bvor(const Formula& a, const Formula& b) { return mk_bvop(FOp::BvOr, a, b); }
inline Formula f_bvxor(const Formula& a, const Formula& b) { return mk_bvop(FOp::BvXor, a, b); }
inline Formula f_bvshl(const Formula& a, const Formula& b) { return mk_bvop(FOp::BvShl, a, b); }
inline Formula f_bvlshr(const Formula& a, const Formula& b) { return mk_bvop(FOp::BvLshr, a, b); }

inline Formula f_extract(uint32_t hi, uint32_t lo, const Formula& a) {
  if (hi > 31 || lo > hi) throw FormulaError("bad extract range");
  if (a->op == FOp::BvConst) {
    uint64_t width = hi - lo + 1;
    uint64_t mask = width >= 32 ? 0xffffffffull : ((1ull << width) - 1);
    return f_bv(static_cast<uint32_t>((a->value >> lo) & mask));
  }
  return mk_node(FOp::Extract, Sort::Bv, {a}, (uint64_t(hi) << 8) | lo);
}

// ---------------------------------------------------------------------------
// Concrete evaluation

struct Value {
  Sort sort;
  bool b = false;
  int64_t i = 0;
  uint32_t bv = 0;

  static Value of_bool(bool v) { return Value{Sort::Bool, v, 0, 0}; }
  static Value of_int(int64_t v) { return Value{Sort::Int, false, v, 0}; }
  static Value of_bv(uint32_t v) { return Value{Sort::Bv, false, 0, v}; }
};

using Env = std::unordered_map<std::string, Value>;

inline Value eval(const Formula& f, const Env& env) {
  switch (f->op) {
    case FOp::BoolConst:
      return Value::of_bool(f->value != 0);
    case FOp::IntConst:
      return Value::of_int(static_cast<int64_t>(f->value));
    case FOp::BvConst:
      return Value::of_bv(static_cast<uint32_t>(f->value));
    case FOp::Var: {
      auto it = env.find(f->name);
      if (it == env.end()) throw FormulaError("unbound variable: " + f->name);
      return it->second;
    }
    case FOp::Not:
      return Value::of_bool(!eval(f->args[0], env).b);
    case FOp::And: {
      for (auto& a : f->args)
        if (!eval(a, env).b) return Value::of_bool(false);
      return Value::of_bool(true);
    }
    case FOp::Or: {
      for (auto& a : f->args)
        if (eval(a, env).b) return Value::of_bool(true);
      return Value::of_bool(false);
    }
    case FOp::Implies:
      return Value::of_bool(!eval(f->args[0], env).b || eval(f->args[1], env).b);
    case FOp::Iff:
      return Value::of_bool(eval(f->args[0], env).b == eval(f->args[1], env).b);
    case FOp::Ite:
      return eval(f->args[0], env).b ? eval(f->args[1], env) : eval(f->args[2], env);
    case FOp::Eq: {
      Value a = eval(f->args[0], env), b = eval(f->args[1], env);
      if (a.sort == Sort::Bool) return Value::of_bool(a.b == b.b);
      if (a.sort == Sort::Int) return Value::of_bool(a.i == b.i);
      return Value::of_bool(a.bv == b.bv);
    }
    case FOp::Le:
      return Value::of_bool(eval(f->args[0], env).i <= eval(f->args[1], env).i);
    case FOp::Lt:
      return Value::of_bool(eval(f->args[0], env).i < eval(f->args[1], env).i);
    case FOp::Ge:
      return Value::of_bool(eval(f->args[0], env).i >= eval(f->args[1], env).i);
    case FOp::Gt:
      return Value::of_bool(eval(f->args[0], env).i > eval(f->args[1], env).i);
    case FOp::Ule:
      return Value::of_bool(eval(f->args[0], env).bv <= eval(f->args[1], env).bv);
    case FOp::Ult:
      return Value::of_bool(eval(f->args[0], env).bv < eval(f->args[1], env).bv);
    case FOp::Uge:
      return Value::of_bool(eval(f->args[0], env).bv >= eval(f->args[1], env).bv);
    case FOp::Ugt:
      return Value::of_bool(eval(f->args[0], env).bv > eval(f->args[1], env).bv);
    case FOp::Add: {
      int64_t s = 0;
      for (auto& a : f->args) s += eval(a, env).i;
      return Value::of_int(s);
    }
    case FOp::BvAdd:
      return Value::of_bv(eval(f->args[0], env).bv + eval(f->args[1], env).bv);
    case FOp::BvSub:
      return Value::of_bv(eval(f->args[0], env).bv - eval(f->args[1], env).bv);
    case FOp::BvMul:
      return Value::of_bv(eval(f->args[0], env).bv * eval(f->args[1], env).bv);
    case FOp::BvAnd:
      return Value::of_bv(eval(f->args[0], env).bv & eval(f->args[1], env).bv);
    case FOp::BvOr:
      return Value::of_bv(eval(f->args[0], env).bv | eval(f->args[1], env).bv);
    case FOp::BvXor:
      return Value::of_bv(eval(f->args[0], env).bv ^ eval(f->args[1], env).bv);
    case FOp::BvShl: {
      uint32_t sh = eval(f->args[1], env).bv;
      return Value::of_bv(sh >= 32 ? 0 : eval(f->args[0], env).bv << sh);
    }
    case FOp::BvLshr: {
      uint32_t sh = eval(f->args[1], env).bv;
      return Value::of_bv(sh >= 32 ? 0 : eval(f->args[0], env).bv >> sh);
    }
    case FOp::Extract: {
      uint32_t hi = static_cast<uint32_t>(f->value >> 8);
      uint32_t lo = static_cast<uint32_t>(f->value & 0xff);
      uint64_t width = hi - lo + 1;
      uint64_t mask = (width >= 32) ? 0xffffffffull : ((1ull << width) - 1);
      return Value::of_bv(static_cast<uint32_t>((eval(f->args[0], env).bv >> lo) & mask));
    }
  }
  throw FormulaError("unreachable formula op");
}

// ---------------------------------------------------------------------------
// SMT-LIB 2 emission

inline void emit_smt(std::ostream& os, const Formula& f) {
  auto emit_nary = [&os](const char* op, const std::vector<Formula>& args) {
    os << '(' << op;
    for (auto& a : args) {
      os << ' ';
      emit_smt(os, a);
    }
    os << ')';
  };
  switch (f->op) {
    case FOp::BoolConst:
      os << (f->value ? "true" : "false");
      return;
    case FOp::IntConst: {
      int64_t v = static_cast<int64_t>(f->value);
      if (v < 0)
        os << "(- " << -v << ')';
      else
        os << v;
      return;
    }
    case FOp::BvConst: {
      char buf[16];
      std::snprintf(buf, sizeof buf, "#x%08x", static_cast<uint32_t>(f->value));
      os << buf;
      return;
    }
    case FOp::Var:
      os << f->name;
      return;
    case FOp::Not:
      emit_nary("not", f->args);
      return;
    case FOp::And:
      emit_nary("and", f->args);
      return;
    case FOp::Or:
      emit_nary("or", f->args);
      return;
    case FOp::Implies:
      emit_nary("=>", f->args);
      return;
    case FOp::Iff:
    case FOp::Eq:
      emit_nary("=", f->args);
      return;
    case FOp::Ite:
      emit_nary("ite", f->args);
      return;
    case FOp::Le:
      emit_nary("<=", f->args);
      return;
    case FOp::Lt:
      emit_nary("<", f->args);
      return;
    case FOp::Ge:
      emit_nary(">=", f->args);
      return;
    case FOp::Gt:
      emit_nary(">", f->args);
      return;
    case FOp::Ule:
      emit_nary("bvule", f->args);
      return;
    case FOp::Ult:
      emit_nary("bvult", f->args);
      return;
    case FOp::Uge:
      emit_nary("bvuge", f->args);
      return;
    case FOp::Ugt:
      emit_nary("bvugt", f->args);
      return;
    case FOp::Add:
      emit_nary("+", f->args);
      return;
    case FOp::BvAdd:
      emit_nary("bvadd", f->args);
      return;
    case FOp::BvSub:
      emit_nary("bvsub", f->args);
      return;
    case FOp::BvMul:
      emit_nary("bvmul", f->args);
      return;
    case FOp::BvAnd:
      emit_nary("bvand", f->args);
      return;
    case FOp::BvOr:
      emit_nary("bvor", f->args);
      return;
    case FOp::BvXor:
      emit_nary("bvxor", f->args);
      return;
    case FOp::BvShl:
      emit_nary("bvshl", f->args);
      return;
    case FOp::BvLshr:
      emit_nary("bvlshr", f->args);
      return;
    case FOp::Extract: {
      os << "((_ extract " << (f->value >> 8) << ' ' << (f->value & 0xff) << ") ";
      emit_smt(os, f->args[0]);
      os << ')';
      return;
    }
  }
  throw FormulaError("unreachable formula op");
}

inline std::string to_smt(const Formula& f) {
  std::ostringstream os;
  emit_smt(os, f);
  return os.str();
}

inline const char* sort_name(Sort s) {
  switch (s) {
    case Sort::Bool:
      return "Bool";
    case Sort::Int:
      return "Int";
    case Sort::Bv:
      return "(_ BitVec 32)";
  }
  return "?";
}

inline void collect_vars(const Formula& f, std::set<std::pair<std::string, Sort>>& out) {
  if (f->op == FOp::Var) out.emplace(f->name, f->sort);
  for (auto& a : f->args) collect_vars(a, out);
}

// Replaces variables by formulas (used to inline predicate definitions).
inline Formula subst_vars(const Formula& f,
                          const std::unordered_map<std::string, Formula>& map) {
  if (f->op == FOp::Var) {
    auto it = map.find(f->name);
    return it == map.end() ? f : it->second;
  }
  if (f->args.empty()) return f;
  std::vector<Formula> args;
  args.reserve(f->args.size());
  bool changed = false;
  for (auto& a : f->args) {
    args.push_back(subst_vars(a, map));
    changed = changed || args.back() != a;
  }
  if (!changed) return f;
  return mk_node(f->op, f->sort, std::move(args), f->value, f->name);
}

}  // namespace cachet
