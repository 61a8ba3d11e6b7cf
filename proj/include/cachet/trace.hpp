#pragma once

// Bounded unrolling of a program into a guarded access sequence, plus
// enumeration of the concrete secret domain.

#include <functional>
#include <map>
#include <optional>

#include "cachet/ir.hpp"

namespace cachet {

struct UnrollError : IrError {
  using IrError::IrError;
};

struct EnumerationError : IrError {
  using IrError::IrError;
};

struct AccessSite {
  int index = 0;  // 1-based, symbolic execution order
  ExprPtr guard;  // 0/1-valued expression over secrets; e_const(1) at top level
  ExprPtr addr;   // byte address over secrets
  bool is_store = false;
  std::optional<uint32_t> static_addr;  // set iff addr references no secret
  bool guard_const_true = false;
};

struct UnrolledTrace {
  std::vector<SecretDecl> secrets;
  std::vector<AccessSite> accesses;
  size_t size() const { return accesses.size(); }
};

namespace detail {

inline bool expr_is_const(const ExprPtr& e) { return e->op == ExprOp::Const; }

// Substitutes bindings and folds constant subtrees.
inline ExprPtr subst_fold(const ExprPtr& e,
                          const std::map<std::string, ExprPtr>& env) {
  switch (e->op) {
    case ExprOp::Const:
      return e;
    case ExprOp::Ref: {
      auto it = env.find(e->name);
      if (it == env.end()) throw UnrollError("unbound name '" + e->name + "'");
      if (!it->second) throw UnrollError("'" + e->name + "' may be undefined here");
      return it->second;
    }
    default:
      break;
  }
  std::vector<ExprPtr> args;
  args.reserve(e->args.size());
  bool all_const = true;
  for (auto& a : e->args) {
    args.push_back(subst_fold(a, env));
    all_const = all_const && expr_is_const(args.back());
  }
  ExprPtr out = e_node(e->op, std::move(args));
  if (all_const) return e_const(eval_expr(out, {}));
  return out;
}

inline ExprPtr truthy(const ExprPtr& e) {
  switch (e->op) {
    case ExprOp::Eq:
    case ExprOp::Ne:
    case ExprOp::Lt:
    case ExprOp::Le:
    case ExprOp::Gt:
    case ExprOp::Ge:
    case ExprOp::Not:
    case ExprOp::LAnd:
      return e;
    case ExprOp::Const:
      return e_const(e->value != 0 ? 1 : 0);
    default:
      return e_bin(ExprOp::Ne, e, e_const(0));
  }
}

struct Unroller {
  const Program& prog;
  size_t limit;
  UnrolledTrace out;
  // nullptr value marks a name that is only conditionally defined
  std::map<std::string, ExprPtr> env;
  std::vector<ExprPtr> guard_stack;

  Unroller(const Program& p, size_t limit_) : prog(p), limit(limit_) {
    for (auto& s : p.secrets) env[s.name] = e_ref(s.name);
  }

  ExprPtr current_guard() const {
    if (guard_stack.empty()) return e_const(1);
    ExprPtr g = guard_stack[0];
    for (size_t k = 1; k < guard_stack.size(); ++k)
      g = e_node(ExprOp::LAnd, {g, guard_stack[k]});
    std::vector<std::string> refs;
    collect_refs(g, refs);
    if (refs.empty()) return e_const(eval_expr(g, {}));
    return g;
  }

  void emit(const LoadStoreStmt& ls) {
    const ArrayDecl* arr = prog.find_array(ls.array);
    if (!arr) throw UnrollError("unknown array '" + ls.array + "'");
    if (out.accesses.size() >= limit)
      throw UnrollError("unrolled access count exceeds limit (" + std::to_string(limit) + ")");
    ExprPtr idx = subst_fold(ls.index, env);
    ExprPtr addr = subst_fold(
        e_bin(ExprOp::Add, e_const(static_cast<uint32_t>(arr->base)),
              e_bin(ExprOp::Mul, e_const(arr->elem_size), idx)),
        env);
    AccessSite site;
    site.index = static_cast<int>(out.accesses.size()) + 1;
    site.guard = current_guard();
    site.addr = addr;
    site.is_store = ls.is_store;
    if (expr_is_const(addr)) site.static_addr = addr->value;
    site.guard_const_true = expr_is_const(site.guard) && site.guard->value != 0;
    out.accesses.push_back(std::move(site));
  }

  void walk(const std::vector<StmtPtr>& body) {
    for (auto& sp : body) walk_stmt(*sp);
  }

  void walk_stmt(const Stmt& s) {
    if (auto* ls = std::get_if<LoadStoreStmt>(&s)) {
      emit(*ls);
    } else if (auto* let = std::get_if<LetStmt>(&s)) {
      env[let->name] = subst_fold(let->expr, env);
    } else if (auto* iff = std::get_if<IfStmt>(&s)) {
      ExprPtr c = truthy(subst_fold(iff->cond, env));
      if (expr_is_const(c)) {
        // statically decided branch: walk only the taken arm
        walk(c->value != 0 ? iff->then_body : iff->else_body);
        return;
      }
      auto saved = env;
      guard_stack.push_back(c);
      walk(iff->then_body);
      guard_stack.pop_back();
      auto then_env = env;
      env = saved;
      guard_stack.push_back(e_not(c));
      walk(iff->else_body);
      guard_stack.pop_back();
      auto else_env = env;
      // merge branch-local bindings
      env = saved;
      for (auto& [name, tv] : then_env) {
        auto e_it = else_env.find(name);
        ExprPtr ev = (e_it != else_env.end()) ? e_it->second : nullptr;
        merge_binding(name, c, tv, ev);
      }
      for (auto& [name, ev] : else_env) {
        if (!then_env.count(name)) merge_binding(name, c, nullptr, ev);
      }
    } else if (auto* fr = std::get_if<ForStmt>(&s)) {
      auto prev = env.find(fr->var) != env.end() ? std::optional<ExprPtr>(env[fr->var])
                                                 : std::nullopt;
      for (uint32_t k = fr->lo; k < fr->hi; ++k) {
        env[fr->var] = e_const(k);
        walk(fr->body);
      }
      if (prev)
        env[fr->var] = *prev;
      else
        env.erase(fr->var);
    }
  }

  void merge_binding(const std::string& name, const ExprPtr& cond, ExprPtr tv, ExprPtr ev) {
    auto prior = env.find(name);
    ExprPtr base = prior != env.end() ? prior->second : nullptr;
    if (!tv) tv = base;
    if (!ev) ev = base;
    if (!tv || !ev) {
      env[name] = nullptr;  // conditionally defined; error on use
      return;
    }
    if (expr_equal(tv, ev)) {
      env[name] = tv;
      return;
    }
    env[name] = subst_fold(e_node(ExprOp::Ite, {cond, tv, ev}), env);
  }
};

}  // namespace detail

inline UnrolledTrace unroll(const Program& p, size_t limit = 4096) {
  detail::Unroller u(p, limit);
  u.walk(p.body);
  u.out.secrets = p.secrets;
  return std::move(u.out);
}

// ---------------------------------------------------------------------------
// Secret domain enumeration

struct SecretSpace {
  std::vector<SecretDecl> secrets;
  uint32_t total_bits = 0;

  explicit SecretSpace(std::vector<SecretDecl> s) : secrets(std::move(s)) {
    for (auto& d : secrets) total_bits += d.width;
  }

  uint64_t size() const { return 1ull << total_bits; }

  bool enumerable() const { return total_bits <= 20; }

  void require_enumerable() const {
    if (!enumerable())
      throw EnumerationError("secret domain too large to enumerate (" +
                             std::to_string(total_bits) + " bits, limit 20)");
  }

  // Packing is lexicographic: the first declared secret occupies the most
  // significant bits, so packed order equals declaration-order tuple order.
  std::map<std::string, uint32_t> unpack(uint64_t packed) const {
    std::map<std::string, uint32_t> env;
    uint32_t shift = total_bits;
    for (auto& d : secrets) {
      shift -= d.width;
      env[d.name] = static_cast<uint32_t>((packed >> shift) & ((1ull << d.width) - 1));
    }
    return env;
  }

  uint64_t pack(const std::map<std::string, uint32_t>& env) const {
    uint64_t packed = 0;
    for (auto& d : secrets) {
      auto it = env.find(d.name);
      if (it == env.end()) throw EnumerationError("missing secret '" + d.name + "'");
      if (it->second >= (1ull << d.width))
        throw EnumerationError("secret '" + d.name + "' out of range");
      packed = (packed << d.width) | it->second;
    }
    return packed;
  }

  void for_each(const std::function<void(uint64_t, const std::map<std::string, uint32_t>&)>& fn)
      const {
    require_enumerable();
    for (uint64_t k = 0; k < size(); ++k) fn(k, unpack(k));
  }
};

// Concrete execution of an unrolled trace: which accesses run, at what address.
struct ConcreteRun {
  std::vector<bool> executed;      // per access site
  std::vector<uint32_t> addrs;     // valid where executed
};

inline ConcreteRun run_trace(const UnrolledTrace& t,
                             const std::map<std::string, uint32_t>& secret_env) {
  ConcreteRun r;
  r.executed.resize(t.size());
  r.addrs.resize(t.size(), 0);
  for (size_t i = 0; i < t.size(); ++i) {
    const AccessSite& a = t.accesses[i];
    bool run = eval_expr(a.guard, secret_env) != 0;
    r.executed[i] = run;
    if (run) r.addrs[i] = eval_expr(a.addr, secret_env);
  }
  return r;
}

}  // namespace cachet
