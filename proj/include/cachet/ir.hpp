#pragma once

// Input language: a small imperative IR over fixed-address arrays and
// secret inputs. All arithmetic is 32-bit unsigned with wraparound;
// comparisons yield 0/1. Programs are immutable once built.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace cachet {

struct IrError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ExprOp {
  Const,
  Ref,  // secret, loop counter or let-bound name
  Add,
  Sub,
  Mul,
  BitAnd,
  BitOr,
  BitXor,
  Shl,
  Shr,
  Eq,
  Ne,
  Lt,
  Le,
  Gt,
  Ge,
  // internal nodes introduced during unrolling; not part of the surface syntax
  Not,
  Ite,
  LAnd,  // logical conjunction of 0/1 values (guard chains)
};

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  ExprOp op;
  uint32_t value = 0;    // Const
  std::string name;      // Ref
  std::vector<ExprPtr> args;
};

inline ExprPtr e_const(uint32_t v) {
  auto e = std::make_shared<Expr>();
  e->op = ExprOp::Const;
  e->value = v;
  return e;
}

inline ExprPtr e_ref(std::string name) {
  auto e = std::make_shared<Expr>();
  e->op = ExprOp::Ref;
  e->name = std::move(name);
  return e;
}

inline ExprPtr e_node(ExprOp op, std::vector<ExprPtr> args) {
  auto e = std::make_shared<Expr>();
  e->op = op;
  e->args = std::move(args);
  return e;
}

inline ExprPtr e_bin(ExprOp op, ExprPtr a, ExprPtr b) {
  return e_node(op, {std::move(a), std::move(b)});
}

inline ExprPtr e_not(ExprPtr a) { return e_node(ExprOp::Not, {std::move(a)}); }

// Evaluation under a concrete environment (name -> u32).
inline uint32_t eval_expr(const ExprPtr& e, const std::map<std::string, uint32_t>& env) {
  switch (e->op) {
    case ExprOp::Const:
      return e->value;
    case ExprOp::Ref: {
      auto it = env.find(e->name);
      if (it == env.end()) throw IrError("unbound name in expression: " + e->name);
      return it->second;
    }
    case ExprOp::Not:
      return eval_expr(e->args[0], env) == 0 ? 1u : 0u;
    case ExprOp::Ite:
      return eval_expr(e->args[0], env) != 0 ? eval_expr(e->args[1], env)
                                             : eval_expr(e->args[2], env);
    case ExprOp::LAnd:
      return (eval_expr(e->args[0], env) != 0 && eval_expr(e->args[1], env) != 0) ? 1u : 0u;
    default:
      break;
  }
  uint32_t a = eval_expr(e->args[0], env);
  uint32_t b = eval_expr(e->args[1], env);
  switch (e->op) {
    case ExprOp::Add:
      return a + b;
    case ExprOp::Sub:
      return a - b;
    case ExprOp::Mul:
      return a * b;
    case ExprOp::BitAnd:
      return a & b;
    case ExprOp::BitOr:
      return a | b;
    case ExprOp::BitXor:
      return a ^ b;
    case ExprOp::Shl:
      return b >= 32 ? 0 : a << b;
    case ExprOp::Shr:
      return b >= 32 ? 0 : a >> b;
    case ExprOp::Eq:
      return a == b;
    case ExprOp::Ne:
      return a != b;
    case ExprOp::Lt:
      return a < b;
    case ExprOp::Le:
      return a <= b;
    case ExprOp::Gt:
      return a > b;
    case ExprOp::Ge:
      return a >= b;
    default:
      throw IrError("unreachable expression op");
  }
}

// Collects free names referenced by an expression.
inline void collect_refs(const ExprPtr& e, std::vector<std::string>& out) {
  if (e->op == ExprOp::Ref) out.push_back(e->name);
  for (auto& a : e->args) collect_refs(a, out);
}

struct LoadStoreStmt;
struct LetStmt;
struct IfStmt;
struct ForStmt;

using Stmt = std::variant<LoadStoreStmt, LetStmt, IfStmt, ForStmt>;
using StmtPtr = std::shared_ptr<const Stmt>;

struct LoadStoreStmt {
  bool is_store = false;
  std::string array;
  ExprPtr index;
};

struct LetStmt {
  std::string name;
  ExprPtr expr;
};

struct IfStmt {
  ExprPtr cond;
  std::vector<StmtPtr> then_body;
  std::vector<StmtPtr> else_body;
};

struct ForStmt {
  std::string var;
  uint32_t lo = 0;
  uint32_t hi = 0;  // exclusive
  std::vector<StmtPtr> body;
};

struct SecretDecl {
  std::string name;
  uint32_t width = 0;  // bits, <= 16
};

struct ArrayDecl {
  std::string name;
  uint32_t count = 0;
  uint32_t elem_size = 0;  // bytes
  uint64_t base = 0;
};

struct Program {
  std::string name;
  std::vector<SecretDecl> secrets;
  std::vector<ArrayDecl> arrays;
  std::vector<StmtPtr> body;

  const ArrayDecl* find_array(const std::string& n) const {
    for (auto& a : arrays)
      if (a.name == n) return &a;
    return nullptr;
  }
  const SecretDecl* find_secret(const std::string& n) const {
    for (auto& s : secrets)
      if (s.name == n) return &s;
    return nullptr;
  }
  uint32_t total_secret_bits() const {
    uint32_t t = 0;
    for (auto& s : secrets) t += s.width;
    return t;
  }
};

// ---------------------------------------------------------------------------
// Canonical pretty printing (re-parseable)

inline int expr_prec(ExprOp op) {
  switch (op) {
    case ExprOp::Mul:
      return 7;
    case ExprOp::Add:
    case ExprOp::Sub:
      return 6;
    case ExprOp::Shl:
    case ExprOp::Shr:
      return 5;
    case ExprOp::Lt:
    case ExprOp::Le:
    case ExprOp::Gt:
    case ExprOp::Ge:
      return 4;
    case ExprOp::Eq:
    case ExprOp::Ne:
      return 3;
    case ExprOp::BitAnd:
      return 2;
    case ExprOp::BitXor:
      return 1;
    case ExprOp::BitOr:
      return 0;
    default:
      return 8;
  }
}

inline const char* expr_op_text(ExprOp op) {
  switch (op) {
    case ExprOp::Add:
      return "+";
    case ExprOp::Sub:
      return "-";
    case ExprOp::Mul:
      return "*";
    case ExprOp::BitAnd:
      return "&";
    case ExprOp::BitOr:
      return "|";
    case ExprOp::BitXor:
      return "^";
    case ExprOp::Shl:
      return "<<";
    case ExprOp::Shr:
      return ">>";
    case ExprOp::Eq:
      return "==";
    case ExprOp::Ne:
      return "!=";
    case ExprOp::Lt:
      return "<";
    case ExprOp::Le:
      return "<=";
    case ExprOp::Gt:
      return ">";
    case ExprOp::Ge:
      return ">=";
    default:
      return "?";
  }
}

inline void print_expr(std::ostream& os, const ExprPtr& e, int parent_prec = -1) {
  switch (e->op) {
    case ExprOp::Const:
      os << e->value;
      return;
    case ExprOp::Ref:
      os << e->name;
      return;
    case ExprOp::Not:
      os << "(";
      print_expr(os, e->args[0]);
      os << " == 0)";
      return;
    case ExprOp::LAnd:
      // debug form only; guard chains are never re-parsed
      os << "(";
      print_expr(os, e->args[0]);
      os << " && ";
      print_expr(os, e->args[1]);
      os << ")";
      return;
    case ExprOp::Ite:
      throw IrError("internal ite has no surface syntax");
    default:
      break;
  }
  int p = expr_prec(e->op);
  bool paren = p <= parent_prec;
  if (paren) os << '(';
  print_expr(os, e->args[0], p - 1);
  os << ' ' << expr_op_text(e->op) << ' ';
  print_expr(os, e->args[1], p);
  if (paren) os << ')';
}

inline void print_stmts(std::ostream& os, const std::vector<StmtPtr>& body, int indent);

inline void print_stmt(std::ostream& os, const Stmt& s, int indent) {
  std::string pad(static_cast<size_t>(indent) * 2, ' ');
  if (auto* ls = std::get_if<LoadStoreStmt>(&s)) {
    os << pad << (ls->is_store ? "store " : "load ") << ls->array << '[';
    print_expr(os, ls->index);
    os << "];\n";
  } else if (auto* let = std::get_if<LetStmt>(&s)) {
    os << pad << "let " << let->name << " = ";
    print_expr(os, let->expr);
    os << ";\n";
  } else if (auto* iff = std::get_if<IfStmt>(&s)) {
    os << pad << "if (";
    print_expr(os, iff->cond);
    os << ") {\n";
    print_stmts(os, iff->then_body, indent + 1);
    os << pad << "}";
    if (!iff->else_body.empty()) {
      os << " else {\n";
      print_stmts(os, iff->else_body, indent + 1);
      os << pad << "}";
    }
    os << "\n";
  } else if (auto* fr = std::get_if<ForStmt>(&s)) {
    os << pad << "for " << fr->var << " in " << fr->lo << ".." << fr->hi << " {\n";
    print_stmts(os, fr->body, indent + 1);
    os << pad << "}\n";
  }
}

inline void print_stmts(std::ostream& os, const std::vector<StmtPtr>& body, int indent) {
  for (auto& s : body) print_stmt(os, *s, indent);
}

inline std::string to_text(const Program& p) {
  std::ostringstream os;
  for (auto& s : p.secrets) os << "secret " << s.name << ":u" << s.width << ";\n";
  for (auto& a : p.arrays) {
    os << "array " << a.name << '[' << a.count << "]:" << a.elem_size << " @0x" << std::hex
       << a.base << std::dec << ";\n";
  }
  print_stmts(os, p.body, 0);
  return os.str();
}

// Structural equality (used by the parse/print round-trip property).
inline bool expr_equal(const ExprPtr& a, const ExprPtr& b) {
  if (a->op != b->op || a->value != b->value || a->name != b->name ||
      a->args.size() != b->args.size())
    return false;
  for (size_t i = 0; i < a->args.size(); ++i)
    if (!expr_equal(a->args[i], b->args[i])) return false;
  return true;
}

inline bool stmt_equal(const Stmt& a, const Stmt& b);

inline bool body_equal(const std::vector<StmtPtr>& a, const std::vector<StmtPtr>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (!stmt_equal(*a[i], *b[i])) return false;
  return true;
}

inline bool stmt_equal(const Stmt& a, const Stmt& b) {
  if (a.index() != b.index()) return false;
  if (auto* x = std::get_if<LoadStoreStmt>(&a)) {
    auto* y = std::get_if<LoadStoreStmt>(&b);
    return x->is_store == y->is_store && x->array == y->array && expr_equal(x->index, y->index);
  }
  if (auto* x = std::get_if<LetStmt>(&a)) {
    auto* y = std::get_if<LetStmt>(&b);
    return x->name == y->name && expr_equal(x->expr, y->expr);
  }
  if (auto* x = std::get_if<IfStmt>(&a)) {
    auto* y = std::get_if<IfStmt>(&b);
    return expr_equal(x->cond, y->cond) && body_equal(x->then_body, y->then_body) &&
           body_equal(x->else_body, y->else_body);
  }
  auto* x = std::get_if<ForStmt>(&a);
  auto* y = std::get_if<ForStmt>(&b);
  return x->var == y->var && x->lo == y->lo && x->hi == y->hi && body_equal(x->body, y->body);
}

inline bool program_equal(const Program& a, const Program& b) {
  if (a.secrets.size() != b.secrets.size() || a.arrays.size() != b.arrays.size()) return false;
  for (size_t i = 0; i < a.secrets.size(); ++i)
    if (a.secrets[i].name != b.secrets[i].name || a.secrets[i].width != b.secrets[i].width)
      return false;
  for (size_t i = 0; i < a.arrays.size(); ++i) {
    auto &x = a.arrays[i], &y = b.arrays[i];
    if (x.name != y.name || x.count != y.count || x.elem_size != y.elem_size || x.base != y.base)
      return false;
  }
  return body_equal(a.body, b.body);
}

}  // namespace cachet
